"""End-to-end planning: mode graph, relaxation, rounding, refinement and gap certificate.

The mode graph follows the contact-pair construction: one vertex per contact
face, and for every unordered pair of "contact endpoints" a fresh copy of all
non-contact regions. The source and target take part in the pairing as two
extra endpoints, so the pusher can approach the first contact face from its
initial position and retreat to its target position from the last one.

Vertex ids:
    source, target      singleton endpoint states
    contact[i]          sticking contact on face i (relaxed SDP vertex set)
    free[a-b][k]        non-contact region k in the copy serving endpoints a, b
                        (a, b are face indices, or s / t for source and target)
"""

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .audit import AuditReport, audit_plan
from .config import transcription_default
from .conic import ConicSet
from .dynamics import (
    LimitSurfaceModel,
    SpatialForce,
    limit_surface,
    quasi_static_velocity,
    rescale_forces_to_limit_surface,
)
from .gcs import (
    GcsGraph,
    PathCandidate,
    build_relaxation,
    coupling_equality,
    dump_graph,
    round_paths,
    solve_flow,
    solve_restriction,
)
from .geometry import RegionDecomposition, SliderGeometry, decompose_regions, min_gap
from .refine import RefinementResult, Segment, refine_segments
from .relaxation import (
    QcqpProblem,
    SemidefiniteRelaxation,
    convex_conic_set,
    extract,
    relax,
    tighten_qcqp,
)
from .transcription import (
    KnotTrajectory,
    ModeKind,
    ModeTranscription,
    build_contact_mode,
    build_endpoint_mode,
    build_noncontact_mode,
)
from .types import (
    CostWeights,
    DisconnectedGraph,
    FrictionParams,
    InfeasibleRestriction,
    InvalidBound,
    InvalidKnots,
    InvalidParams,
    NoContainingRegion,
    NoFeasiblePlan,
    NoPathFound,
    NotSolved,
    PlannerSettings,
    PusherSpec,
    RefinementFailed,
    RefinementSettings,
    UnreachableTarget,
)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

BOUND_TOL = 1e-6
CONTACT_GAP_TOL = 1e-9

# =============================================================================
# Tasks
# =============================================================================


@dataclass(frozen=True)
class Configuration:
    """Slider pose (world frame) and pusher position (slider frame)."""

    slider_position: tuple[float, float]
    slider_angle: float
    pusher_position: tuple[float, float]

    @property
    def r(self) -> np.ndarray:
        return np.array([np.cos(self.slider_angle), np.sin(self.slider_angle)])

    def state(self) -> np.ndarray:
        return np.concatenate([self.slider_position, self.r, self.pusher_position]).astype(float)

    def to_dict(self) -> dict:
        return {
            "slider_position": list(self.slider_position),
            "slider_angle": self.slider_angle,
            "pusher_position": list(self.pusher_position),
        }


def _default_pusher() -> PusherSpec:
    return PusherSpec(radius=float(transcription_default("pusher_radius")))


@dataclass(frozen=True, eq=False)
class TaskSpec:
    """A planar pushing task.

    Raises:
        InvalidKnots: If fewer than two knots are requested
        InvalidParams: If a pose leaves the workspace or a pusher position collides with the slider
    """

    geometry: SliderGeometry
    initial: Configuration
    target: Configuration
    friction: FrictionParams = field(default_factory=FrictionParams.from_dict)
    weights: CostWeights = field(default_factory=CostWeights.from_dict)
    pusher: PusherSpec = field(default_factory=_default_pusher)
    num_knots: int = field(default_factory=lambda: int(transcription_default("knots")))
    h: float = field(default_factory=lambda: float(transcription_default("timestep")))
    workspace_side: float = field(default_factory=lambda: float(transcription_default("workspace_side")))
    name: str = "task"

    def __post_init__(self):
        if self.num_knots < 2:
            raise InvalidKnots(f"A task needs at least 2 knots per mode, got {self.num_knots}")
        if self.h <= 0:
            raise InvalidParams(f"Timestep must be positive, got {self.h}")
        half = self.workspace_side / 2
        for label, config in (("initial", self.initial), ("target", self.target)):
            if np.max(np.abs(config.slider_position)) > half:
                raise InvalidParams(
                    f"{label} slider position {tuple(config.slider_position)} is outside the "
                    f"{self.workspace_side} m workspace"
                )
            # regions are clipped to the workspace box in the slider frame
            if np.max(np.abs(config.pusher_position)) > half:
                raise InvalidParams(
                    f"{label} pusher position {tuple(config.pusher_position)} is outside the "
                    f"{self.workspace_side} m workspace"
                )
            try:
                gap, _ = min_gap(self.decomposition, config.pusher_position)
            except NoContainingRegion as e:
                raise InvalidParams(f"{label} pusher position collides with the slider: {e}") from e
            if gap < -CONTACT_GAP_TOL:
                raise InvalidParams(f"{label} pusher position has negative gap {gap:.4g}")

    @cached_property
    def decomposition(self) -> RegionDecomposition:
        return decompose_regions(self.geometry, self.pusher, self.workspace_side)

    @cached_property
    def model(self) -> LimitSurfaceModel:
        return limit_surface(self.friction, self.geometry.characteristic_radius)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "geometry": self.geometry.to_dict(),
            "initial": self.initial.to_dict(),
            "target": self.target.to_dict(),
            "friction": self.friction.to_dict(),
            "weights": self.weights.to_dict(),
            "pusher_radius": self.pusher.radius,
            "knots": self.num_knots,
            "timestep": self.h,
            "workspace_side": self.workspace_side,
        }


# =============================================================================
# Mode graph
# =============================================================================


@dataclass
class ModeGraph:
    """GcsGraph of a task plus the transcription behind every vertex."""

    task: TaskSpec
    gcs: GcsGraph
    transcriptions: dict[str, ModeTranscription]
    qcqps: dict[str, QcqpProblem]
    relaxations: dict[str, SemidefiniteRelaxation]

    def interior_vertex_count(self) -> int:
        """Contact vertices plus the non-contact copies serving two contact faces."""
        count = 0
        for meta in self.gcs.metadata.values():
            if meta.get("kind") == ModeKind.CONTACT.value:
                count += 1
            elif meta.get("kind") == ModeKind.NONCONTACT.value and all(isinstance(e, int) for e in meta["pair"]):
                count += 1
        return count


def build_mode_graph(task: TaskSpec) -> ModeGraph:
    """Build the graph of convex sets for a task.

    Raises:
        UnreachableTarget: If no source-target path exists after construction
    """
    start = time.perf_counter()
    decomp = task.decomposition
    num_faces = decomp.geometry.num_faces
    r_source, r_target = task.initial.r, task.target.r

    transcriptions: dict[str, ModeTranscription] = {}
    qcqps: dict[str, QcqpProblem] = {}
    relaxations: dict[str, SemidefiniteRelaxation] = {}
    gcs = GcsGraph("source", "target")

    def register(name: str, transcription: ModeTranscription, qcqp: QcqpProblem, conic_set: ConicSet, **meta):
        transcriptions[name] = transcription
        qcqps[name] = qcqp
        gcs.add_vertex(name, conic_set, **meta)

    for kind, config in ((ModeKind.SOURCE, task.initial), (ModeKind.TARGET, task.target)):
        endpoint = build_endpoint_mode(kind, config.state(), task.h)
        qcqp = endpoint.to_qcqp()
        register(kind.value, endpoint, qcqp, convex_conic_set(qcqp), kind=kind.value)

    for i in range(num_faces):
        contact = build_contact_mode(
            i, decomp, task.model, task.friction, task.weights, task.num_knots, task.h
        )
        qcqp = tighten_qcqp(contact.to_qcqp(), contact.tightening_context(r_source, r_target))
        relaxation = relax(qcqp)
        name = f"contact[{i}]"
        relaxations[name] = relaxation
        register(name, contact, qcqp, relaxation.conic_set, kind=ModeKind.CONTACT.value, face=i)

    free_modes = []
    for k in range(num_faces):
        free = build_noncontact_mode(k, decomp, task.weights, task.num_knots, task.h)
        qcqp = free.to_qcqp(lift_squares=False)
        free_modes.append((free, qcqp, convex_conic_set(qcqp)))
    adjacency = [
        (k, l) for k in range(num_faces) for l in range(num_faces) if k != l and decomp.regions_intersect(k, l)
    ]

    def connect(u: str, v: str):
        left = transcriptions[u].terminal_state_map
        right = transcriptions[v].initial_state_map
        gcs.add_edge(u, v, atoms=(coupling_equality(gcs.vertices[u].size, left, right),))

    endpoints = ["s", *range(num_faces), "t"]
    for a, b in combinations(endpoints, 2):
        label = f"{a}-{b}"
        copy = [f"free[{label}][{k}]" for k in range(num_faces)]
        for k, (free, qcqp, conic_set) in enumerate(free_modes):
            register(copy[k], free, qcqp, conic_set, kind=ModeKind.NONCONTACT.value, region=k, pair=[a, b])
        for k, l in adjacency:
            connect(copy[k], copy[l])
        for e in (a, b):
            if e == "s":
                for k in range(num_faces):
                    if decomp.regions[k].contains(task.initial.pusher_position):
                        connect("source", copy[k])
            elif e == "t":
                for k in range(num_faces):
                    if decomp.regions[k].contains(task.target.pusher_position):
                        connect(copy[k], "target")
            else:
                connect(f"contact[{e}]", copy[e])
                connect(copy[e], f"contact[{e}]")

    for i in range(num_faces):
        if abs(decomp.gap(i, task.initial.pusher_position)) <= CONTACT_GAP_TOL:
            connect("source", f"contact[{i}]")
        if abs(decomp.gap(i, task.target.pusher_position)) <= CONTACT_GAP_TOL:
            connect(f"contact[{i}]", "target")

    try:
        gcs.check_connected()
    except DisconnectedGraph as e:
        raise UnreachableTarget(f"Task '{task.name}': {e}") from e
    logger.info(
        "Mode graph for '%s': %d vertices, %d edges (%.2fs)",
        task.name,
        len(gcs.vertices),
        len(gcs.edges),
        time.perf_counter() - start,
    )
    return ModeGraph(task=task, gcs=gcs, transcriptions=transcriptions, qcqps=qcqps, relaxations=relaxations)


# =============================================================================
# Results
# =============================================================================


@dataclass
class PlanResult:
    """A refined, certified plan.

    Attributes:
        task_name: Name of the planned task
        seed: Rounding seed
        modes: Vertex ids of the chosen path, source to target
        segments: Knot trajectories of the non-endpoint modes, in path order
        c_relax: Optimal value of the graph relaxation (lower bound)
        c_round: Cost of the refined trajectory (upper bound)
        gap: (c_round − c_relax) / c_relax
        residuals: Largest violation per constraint family from the independent audit
        timings: Seconds spent in relaxation, rounding and refinement
        forces: Planned and limit-surface-scaled wrenches per contact interval
        candidates: Number of distinct rounded paths tried
        graph_json: Graph dump with the relaxed edge flows (not part of the plan JSON)
    """

    task_name: str
    seed: int
    modes: list[str]
    segments: list[KnotTrajectory]
    c_relax: float
    c_round: float
    gap: float
    residuals: dict[str, float]
    timings: dict[str, float]
    forces: list[dict] = field(default_factory=list)
    candidates: int = 1
    graph_json: str = field(default="", repr=False)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def states(self) -> np.ndarray:
        """Knot states of the stitched trajectory, shared segment boundaries listed once."""
        if not self.segments:
            return np.zeros((0, 6))
        rows = [self.segments[0].states]
        rows.extend(seg.states[1:] for seg in self.segments[1:])
        return np.vstack(rows)

    def to_dict(self, include_timings: bool = True) -> dict:
        data = {
            "task": self.task_name,
            "seed": self.seed,
            "modes": list(self.modes),
            "segments": [seg.to_dict() for seg in self.segments],
            "c_relax": self.c_relax,
            "c_round": self.c_round,
            "gap": self.gap,
            "residuals": dict(self.residuals),
            "forces": list(self.forces),
            "candidates": self.candidates,
        }
        if include_timings:
            data["timings"] = dict(self.timings)
        return data


def certify_gap(c_relax: float, c_round: float) -> float:
    """Relative optimality gap δ = (C_round − C_relax) / C_relax.

    Raises:
        InvalidBound: If C_relax is not positive or C_round falls below it by more than 1e-6
    """
    if c_relax <= 0:
        raise InvalidBound(f"Relaxation cost must be positive, got {c_relax}")
    if c_round < c_relax - BOUND_TOL:
        raise InvalidBound(f"Rounded cost {c_round:.9g} is below the lower bound {c_relax:.9g}")
    return (c_round - c_relax) / c_relax


def _contact_forces(task: TaskSpec, segments: list[KnotTrajectory]) -> list[dict]:
    rows = []
    for s, seg in enumerate(segments):
        if seg.mode.kind is not ModeKind.CONTACT:
            continue
        for k in range(len(seg.inputs)):
            F = SpatialForce.from_contact(seg.contact_points[k], seg.inputs[k, 0:2])
            V = quasi_static_velocity(task.model, F)
            (scaled,) = rescale_forces_to_limit_surface([F], [V], task.model)
            rows.append(
                {
                    "segment": s,
                    "interval": k,
                    "planned": F.as_array().tolist(),
                    "scaled": scaled.as_array().tolist(),
                }
            )
    return rows


# =============================================================================
# Pipeline
# =============================================================================


def _segments(graph: ModeGraph, path: list[str]) -> list[Segment]:
    return [
        Segment(
            name=v,
            qcqp=graph.qcqps[v],
            initial_map=graph.transcriptions[v].initial_state_map,
            terminal_map=graph.transcriptions[v].terminal_state_map,
        )
        for v in path
    ]


def initial_guess(graph: ModeGraph, vertex_values: dict[str, np.ndarray], path: list[str]) -> list[np.ndarray]:
    """Per-vertex variable estimates read from a solved restriction.

    Lifted vertices contribute the first column of their moment blocks; convex
    vertices contribute their variables directly.
    """
    guesses = []
    for v in path:
        values = vertex_values[v]
        if v in graph.relaxations:
            guesses.append(extract(graph.relaxations[v], values).point)
        else:
            guesses.append(np.asarray(values[1 : graph.qcqps[v].n + 1], dtype=float))
    return guesses


def nonconvex_refine(
    graph: ModeGraph,
    path: list[str],
    guess: list[np.ndarray],
    settings: RefinementSettings | None = None,
) -> tuple[list[KnotTrajectory], RefinementResult]:
    """Refine a guess for a fixed mode sequence into a feasible trajectory.

    Returns:
        (knot trajectories of the non-endpoint modes, refinement result)

    Raises:
        MismatchedLayout: If the guess does not match the mode sequence
        RefinementFailed: If the tolerances are not reached within the iteration budget
    """
    result = refine_segments(_segments(graph, path), guess, settings)
    trajectories = [
        graph.transcriptions[v].trajectory(x)
        for v, x in zip(path, result.points)
        if graph.transcriptions[v].mode.kind not in (ModeKind.SOURCE, ModeKind.TARGET)
    ]
    return trajectories, result


def plan(task: TaskSpec, seed: int = 0, settings: PlannerSettings | None = None) -> PlanResult:
    """Plan a task: relax, round, restrict, refine and certify.

    Every rounded candidate is restricted, refined and audited; the cheapest
    refinement that passes the audit is returned.

    Raises:
        NoFeasiblePlan: If the relaxation fails, no candidate passes refinement
            and audit, or the rounded cost falls below the lower bound
        UnreachableTarget: If the mode graph has no source-target path
    """
    settings = settings or PlannerSettings()
    timings = {"relaxation": 0.0, "rounding": 0.0, "refinement": 0.0}

    graph = build_mode_graph(task)
    start = time.perf_counter()
    relaxation = build_relaxation(graph.gcs)
    solution = solve_flow(relaxation, settings.solver)
    timings["relaxation"] = time.perf_counter() - start
    if not solution.outcome.is_optimal:
        raise NoFeasiblePlan(
            f"Graph relaxation of '{task.name}' ended with {solution.outcome.status}",
            diagnostics={"stage": "relaxation", **solution.outcome.diagnostics},
        )
    c_relax = float(solution.cost)

    start = time.perf_counter()
    try:
        candidates: list[PathCandidate] = round_paths(
            solution,
            attempts=settings.rounding.attempts,
            seed=seed,
            flow_threshold=settings.rounding.flow_threshold,
        )
    except NoPathFound as e:
        raise NoFeasiblePlan(str(e), diagnostics={"stage": "rounding", "c_relax": c_relax}) from e
    timings["rounding"] = time.perf_counter() - start

    failures: list[dict] = []
    best: tuple[float, list[str], list[KnotTrajectory], AuditReport] | None = None
    for candidate in candidates:
        path = list(candidate.vertices)
        start = time.perf_counter()
        try:
            restriction = solve_restriction(graph.gcs, candidate, settings.solver)
        except InfeasibleRestriction as e:
            logger.warning("Discarding candidate %s: %s", " -> ".join(path), e)
            failures.append({"path": path, "stage": "restriction", "error": str(e)})
            continue
        finally:
            timings["rounding"] += time.perf_counter() - start

        start = time.perf_counter()
        try:
            guess = initial_guess(graph, restriction.vertex_values, path)
            trajectories, refined = nonconvex_refine(graph, path, guess, settings.refinement)
        except (RefinementFailed, NotSolved) as e:
            logger.warning("Refinement of %s failed: %s", " -> ".join(path), e)
            failures.append(
                {"path": path, "stage": "refinement", "error": str(e), **getattr(e, "diagnostics", {})}
            )
            continue
        finally:
            timings["refinement"] += time.perf_counter() - start
        audit = audit_plan(task, trajectories)
        if not audit.passed():
            logger.warning("Refined %s fails the audit: %s", " -> ".join(path), audit.worst)
            failures.append({"path": path, "stage": "audit", "residuals": audit.residuals, "worst": audit.worst})
            continue
        if best is None or refined.cost < best[0]:
            best = (refined.cost, path, trajectories, audit)

    if best is None:
        raise NoFeasiblePlan(
            f"None of {len(candidates)} candidate paths produced a feasible trajectory",
            diagnostics={"c_relax": c_relax, "failures": failures},
        )

    c_round, path, trajectories, audit = best
    try:
        gap = certify_gap(c_relax, c_round)
    except InvalidBound as e:
        raise NoFeasiblePlan(
            f"Certificate for '{task.name}' failed: {e}",
            diagnostics={"stage": "certificate", "c_relax": c_relax, "c_round": float(c_round), "path": path},
        ) from e
    logger.info("Planned '%s': C_relax %.6g, C_round %.6g, gap %.2f%%", task.name, c_relax, c_round, 100 * gap)
    return PlanResult(
        task_name=task.name,
        seed=seed,
        modes=path,
        segments=trajectories,
        c_relax=c_relax,
        c_round=float(c_round),
        gap=float(gap),
        residuals=audit.residuals,
        timings=timings,
        forces=_contact_forces(task, trajectories),
        candidates=len(candidates),
        graph_json=dump_graph(graph.gcs, solution),
    )
