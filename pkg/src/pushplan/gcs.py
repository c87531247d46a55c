"""Graphs of convex sets: flow relaxation, randomized rounding and path restrictions.

Vertices carry homogeneous ConicSets (see :class:`pushplan.conic.ConicSet`);
edges carry coupling atoms and an optional cost over a joint layout:

    0                               homogenizer (edge flow, or 1 in a restriction)
    1 .. size_u - 1                 variables of the tail vertex u
    size_u .. size_u + size_v - 2   variables of the head vertex v
    then                            edge-local extra variables

The relaxation gives every edge a flow y_e ∈ [0, 1] and perspective copies of
both endpoint sets scaled by y_e. Flow and copies are conserved at interior
vertices, in-degree is at most one and two-cycles are cut. Vertex costs are
charged on the tail copy of every out-edge, and the target's cost on its
in-edges.
"""

import json
import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .conic import (
    Affine,
    AffineBlock,
    ConeAtom,
    ConicProgram,
    ConicSet,
    Cost,
    NonnegCone,
    SolverOutcome,
    VariableSpace,
    ZeroCone,
    assemble,
    remap_atom,
    solve,
)
from .types import DisconnectedGraph, InfeasibleRestriction, NoPathFound, RoundingSettings, SolverSettings

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# =============================================================================
# Graph
# =============================================================================


@dataclass(frozen=True, eq=False)
class EdgeSpec:
    """Edge u → v with coupling atoms and cost over the joint layout."""

    u: str
    v: str
    atoms: tuple[ConeAtom, ...] = ()
    cost: Affine = field(default_factory=Affine)
    num_extra: int = 0


class GcsGraph:
    """Directed graph whose vertices are convex sets.

    Example:
        >>> g = GcsGraph("s", "t")
        >>> g.add_vertex("s", ConicSet.point([0.0]))
        >>> g.add_vertex("t", ConicSet.point([1.0]))
        >>> g.add_edge("s", "t", cost=Affine({0: 1.0}))
    """

    def __init__(self, source: str, target: str):
        self.source = source
        self.target = target
        self.vertices: dict[str, ConicSet] = {}
        self.edges: dict[tuple[str, str], EdgeSpec] = {}
        self.metadata: dict[str, dict] = {}
        self._out: dict[str, list[tuple[str, str]]] = {}
        self._in: dict[str, list[tuple[str, str]]] = {}

    def add_vertex(self, name: str, conic_set: ConicSet, **metadata) -> None:
        if name in self.vertices:
            raise ValueError(f"Vertex '{name}' already exists")
        self.vertices[name] = conic_set
        self.metadata[name] = metadata
        self._out[name] = []
        self._in[name] = []

    def add_edge(
        self,
        u: str,
        v: str,
        atoms: tuple[ConeAtom, ...] = (),
        cost: Affine | None = None,
        num_extra: int = 0,
    ) -> EdgeSpec:
        """Add edge u → v.

        Raises:
            ValueError: On unknown vertices, self-edges, edges into the source or out of the target
        """
        if u not in self.vertices or v not in self.vertices:
            raise ValueError(f"Edge ({u}, {v}) references an unknown vertex")
        if u == v:
            raise ValueError(f"Self-edge on '{u}'")
        if v == self.source:
            raise ValueError("The source vertex cannot have incoming edges")
        if u == self.target:
            raise ValueError("The target vertex cannot have outgoing edges")
        edge = EdgeSpec(u=u, v=v, atoms=tuple(atoms), cost=cost or Affine(), num_extra=num_extra)
        if (u, v) not in self.edges:
            self._out[u].append((u, v))
            self._in[v].append((u, v))
        self.edges[(u, v)] = edge
        return edge

    def digraph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.vertices)
        graph.add_edges_from(self.edges)
        return graph

    def out_edges(self, v: str) -> list[tuple[str, str]]:
        return list(self._out.get(v, ()))

    def in_edges(self, v: str) -> list[tuple[str, str]]:
        return list(self._in.get(v, ()))

    def joint_size(self, u: str, v: str) -> int:
        return self.vertices[u].size + self.vertices[v].size - 1

    def check_connected(self) -> None:
        """Raise DisconnectedGraph unless the target is reachable from the source."""
        graph = self.digraph()
        if self.source not in graph or self.target not in graph or not nx.has_path(graph, self.source, self.target):
            raise DisconnectedGraph(f"No path from '{self.source}' to '{self.target}'")

    def __repr__(self) -> str:
        return f"GcsGraph({len(self.vertices)} vertices, {len(self.edges)} edges)"


def coupling_equality(size_u: int, left: np.ndarray, right: np.ndarray) -> ZeroCone:
    """Edge atom ``left(x_u) = right(x_v)`` in the joint layout.

    Args:
        size_u: Size of the tail vertex set
        left: (d, m) homogeneous map over the first m local variables of u
        right: (d, m') homogeneous map over the first m' local variables of v
    """
    left = np.atleast_2d(left)
    right = np.atleast_2d(right)
    A = np.zeros((left.shape[0], size_u + right.shape[1] - 1))
    A[:, : left.shape[1]] += left
    A[:, 0] -= right[:, 0]
    A[:, size_u : size_u + right.shape[1] - 1] -= right[:, 1:]
    return ZeroCone(AffineBlock.from_matrix(A))


def _joint_map(flow: int, u_vars, v_vars, extra) -> np.ndarray:
    return np.array([flow, *u_vars, *v_vars, *extra], dtype=int)


# =============================================================================
# Relaxation
# =============================================================================


@dataclass(frozen=True, eq=False)
class FlowRelaxation:
    """Convex relaxation of the shortest-path problem on a GcsGraph.

    Attributes:
        graph: The graph
        program: Assembled conic program
        flow_index: Edge → global index of its flow variable
        copy_maps: Edge → (index map of the tail copy, index map of the head copy)
    """

    graph: GcsGraph
    program: ConicProgram
    flow_index: dict[tuple[str, str], int]
    copy_maps: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]


@dataclass
class FlowSolution:
    relaxation: FlowRelaxation
    outcome: SolverOutcome
    flows: dict[tuple[str, str], float] = field(default_factory=dict)

    @property
    def cost(self) -> float | None:
        return self.outcome.objective

    def copy_values(self, edge: tuple[str, str], head: bool = False) -> np.ndarray:
        """Local values of the tail (or head) copy carried by ``edge``."""
        maps = self.relaxation.copy_maps[edge]
        return self.outcome.primal[maps[1 if head else 0]]

    def conservation_residual(self) -> float:
        """Largest |in-flow − out-flow| over interior vertices."""
        graph = self.relaxation.graph
        worst = 0.0
        for v in graph.vertices:
            if v in (graph.source, graph.target):
                continue
            inflow = sum(self.flows[e] for e in graph.in_edges(v))
            outflow = sum(self.flows[e] for e in graph.out_edges(v))
            worst = max(worst, abs(inflow - outflow))
        return worst


def build_relaxation(graph: GcsGraph) -> FlowRelaxation:
    """Assemble the flow relaxation of the shortest-path problem.

    Raises:
        DisconnectedGraph: If the target cannot be reached from the source
    """
    graph.check_connected()
    space = VariableSpace()
    parts: list = []
    flow_index: dict[tuple[str, str], int] = {}
    copy_maps: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}

    for key, edge in graph.edges.items():
        set_u, set_v = graph.vertices[edge.u], graph.vertices[edge.v]
        y = space.allocate(1, f"flow[{edge.u}->{edge.v}]")[0]
        u_vars = space.allocate(set_u.size - 1)
        v_vars = space.allocate(set_v.size - 1)
        extra = space.allocate(edge.num_extra)
        map_u = np.array([y, *u_vars], dtype=int)
        map_v = np.array([y, *v_vars], dtype=int)
        flow_index[key] = y
        copy_maps[key] = (map_u, map_v)

        atoms_u, cost_u = set_u.instantiate(map_u)
        atoms_v, cost_v = set_v.instantiate(map_v)
        parts.extend(atoms_u)
        parts.extend(atoms_v)
        parts.append(Cost(cost_u))
        if edge.v == graph.target:
            parts.append(Cost(cost_v))
        joint = _joint_map(y, u_vars, v_vars, extra)
        parts.extend(remap_atom(atom, joint) for atom in edge.atoms)
        parts.append(Cost(Affine({int(joint[k]): c for k, c in edge.cost.coeffs.items()})))
        parts.append(NonnegCone(AffineBlock.from_rows([Affine({y: 1.0}), Affine({y: -1.0}, 1.0)])))

    balance_rows = []
    degree_rows = []
    for v, conic_set in graph.vertices.items():
        incoming = graph.in_edges(v)
        outgoing = graph.out_edges(v)
        in_flow = sum((Affine({flow_index[e]: 1.0}) for e in incoming), Affine())
        out_flow = sum((Affine({flow_index[e]: 1.0}) for e in outgoing), Affine())
        if v == graph.source:
            balance_rows.append(out_flow - 1.0)
            continue
        if v == graph.target:
            balance_rows.append(in_flow - 1.0)
            continue
        if not incoming and not outgoing:
            continue
        for j in range(conic_set.size):
            row = Affine()
            for e in incoming:
                row = row + Affine({int(copy_maps[e][1][j]): 1.0})
            for e in outgoing:
                row = row + Affine({int(copy_maps[e][0][j]): -1.0})
            balance_rows.append(row)
        degree_rows.append(-in_flow + 1.0)
        for u, _ in incoming:
            if (v, u) in graph.edges:
                degree_rows.append(
                    in_flow - Affine({flow_index[(u, v)]: 1.0}) - Affine({flow_index[(v, u)]: 1.0})
                )
    parts.append(ZeroCone(AffineBlock.from_rows(balance_rows)))
    if degree_rows:
        parts.append(NonnegCone(AffineBlock.from_rows(degree_rows)))

    program = assemble(parts, num_vars=space.size)
    logger.info(
        "GCS relaxation: %d vertices, %d edges, %d variables",
        len(graph.vertices),
        len(graph.edges),
        program.num_vars,
    )
    return FlowRelaxation(graph=graph, program=program, flow_index=flow_index, copy_maps=copy_maps)


def solve_flow(relaxation: FlowRelaxation, settings: SolverSettings | None = None) -> FlowSolution:
    """Solve the flow relaxation; flows are empty when the solve did not reach optimality."""
    outcome = solve(relaxation.program, settings)
    solution = FlowSolution(relaxation=relaxation, outcome=outcome)
    if outcome.is_optimal:
        solution.flows = {e: float(outcome.primal[i]) for e, i in relaxation.flow_index.items()}
        logger.info("GCS relaxation cost %.6g (%.2fs)", outcome.objective, outcome.solve_time)
    else:
        logger.warning("GCS relaxation finished with status %s", outcome.status)
    return solution


# =============================================================================
# Rounding
# =============================================================================


@dataclass
class PathCandidate:
    """Simple source-target path, with its restriction cost once solved."""

    vertices: tuple[str, ...]
    cost: float | None = None

    def edges(self) -> list[tuple[str, str]]:
        return list(zip(self.vertices[:-1], self.vertices[1:]))


def _random_dfs(successors, source: str, target: str, rng: np.random.Generator) -> tuple[str, ...] | None:
    path = [source]
    visited = {source}
    options = {source: list(successors.get(source, []))}
    while path:
        v = path[-1]
        if v == target:
            return tuple(path)
        choices = [(w, f) for w, f in options[v] if w not in visited]
        if not choices:
            path.pop()
            continue
        weights = np.array([f for _, f in choices])
        pick = int(rng.choice(len(choices), p=weights / weights.sum()))
        w = choices[pick][0]
        options[v].remove(choices[pick])
        path.append(w)
        visited.add(w)
        options[w] = list(successors.get(w, []))
    return None


def round_paths(
    solution: FlowSolution,
    attempts: int | None = None,
    seed: int = 0,
    flow_threshold: float | None = None,
) -> list[PathCandidate]:
    """Sample distinct paths by flow-weighted randomized depth-first search.

    Edges with flow below ``flow_threshold`` are pruned; the next edge is drawn
    with probability proportional to its flow and vertices are never revisited.

    Args:
        solution: Solved flow relaxation
        attempts: Number of traversals (package default when omitted)
        seed: Seed of the traversal random generator
        flow_threshold: Pruning threshold (package default when omitted)

    Raises:
        NoPathFound: If every traversal dead-ends
    """
    defaults = RoundingSettings.from_dict()
    attempts = defaults.attempts if attempts is None else attempts
    flow_threshold = defaults.flow_threshold if flow_threshold is None else flow_threshold
    graph = solution.relaxation.graph

    successors: dict[str, list[tuple[str, float]]] = {}
    for (u, v), flow in solution.flows.items():
        if flow >= flow_threshold:
            successors.setdefault(u, []).append((v, flow))

    rng = np.random.default_rng(seed)
    candidates: list[PathCandidate] = []
    seen: set[tuple[str, ...]] = set()
    for _ in range(attempts):
        path = _random_dfs(successors, graph.source, graph.target, rng)
        if path is not None and path not in seen:
            seen.add(path)
            candidates.append(PathCandidate(vertices=path))
    if not candidates:
        raise NoPathFound(f"All {attempts} rounding traversals dead-ended")
    logger.info("Rounding produced %d distinct path(s) from %d attempts", len(candidates), attempts)
    return candidates


# =============================================================================
# Restriction
# =============================================================================


@dataclass
class RestrictionResult:
    """Solved convex program of one fixed path."""

    path: PathCandidate
    cost: float
    vertex_values: dict[str, np.ndarray]
    outcome: SolverOutcome


def solve_restriction(
    graph: GcsGraph,
    path: PathCandidate,
    settings: SolverSettings | None = None,
) -> RestrictionResult:
    """Minimize the vertex and edge costs along a fixed path.

    Raises:
        ValueError: If the path repeats a vertex or uses a missing edge
        InfeasibleRestriction: If the path's sets and couplings admit no point
    """
    if len(set(path.vertices)) != len(path.vertices):
        raise ValueError(f"Path {path.vertices} repeats a vertex")
    for e in path.edges():
        if e not in graph.edges:
            raise ValueError(f"Path uses missing edge {e}")

    space = VariableSpace()
    one = space.allocate(1, "one")[0]
    parts: list = [ZeroCone(AffineBlock.from_rows([Affine({one: 1.0}, -1.0)]))]
    maps: dict[str, np.ndarray] = {}
    for v in path.vertices:
        conic_set = graph.vertices[v]
        maps[v] = np.array([one, *space.allocate(conic_set.size - 1, v)], dtype=int)
        atoms, cost = conic_set.instantiate(maps[v])
        parts.extend(atoms)
        parts.append(Cost(cost))
    for u, v in path.edges():
        edge = graph.edges[(u, v)]
        extra = space.allocate(edge.num_extra)
        joint = _joint_map(one, maps[u][1:], maps[v][1:], extra)
        parts.extend(remap_atom(atom, joint) for atom in edge.atoms)
        parts.append(Cost(Affine({int(joint[k]): c for k, c in edge.cost.coeffs.items()})))

    outcome = solve(assemble(parts, num_vars=space.size), settings)
    if not outcome.is_optimal:
        raise InfeasibleRestriction(f"Restriction of path {' -> '.join(path.vertices)} ended with {outcome.status}")
    path.cost = outcome.objective
    values = {v: outcome.primal[m] for v, m in maps.items()}
    logger.debug("Restriction of %d vertices: cost %.6g", len(path.vertices), outcome.objective)
    return RestrictionResult(path=path, cost=outcome.objective, vertex_values=values, outcome=outcome)


# =============================================================================
# Debug output
# =============================================================================


def dump_graph(graph: GcsGraph, solution: FlowSolution | None = None) -> str:
    """JSON description of the graph: vertex ids, edges and (when solved) edge flows."""
    flows = solution.flows if solution is not None else {}
    data = {
        "source": graph.source,
        "target": graph.target,
        "vertices": [{"id": v, "size": s.size, **graph.metadata.get(v, {})} for v, s in graph.vertices.items()],
        "edges": [{"u": u, "v": v, "flow": flows.get((u, v))} for u, v in graph.edges],
    }
    return json.dumps(data, indent=2)
