"""Independent feasibility audit of planned trajectories.

Every constraint is recomputed from raw knot values and the polygon vertices:
faces are rebuilt here from the vertex list, distances come from shapely and
the dynamics from the forward-Euler residual. Nothing is read back from the
transcription builders.
"""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from shapely.geometry import Point, Polygon

from .dynamics import ContactForceDecomposition, euler_step_residual, friction_cone_residuals
from .transcription import KnotTrajectory, ModeKind

if TYPE_CHECKING:
    from .planner import TaskSpec

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DYNAMICS_TOL = 1e-6
AFFINE_TOL = 1e-6


@dataclass
class AuditReport:
    """Largest violation per constraint family, and the offending location of each."""

    residuals: dict[str, float]
    worst: dict[str, str] = field(default_factory=dict)

    def passed(self, dynamics_tol: float = DYNAMICS_TOL, affine_tol: float = AFFINE_TOL) -> bool:
        for name, value in self.residuals.items():
            limit = dynamics_tol if name in ("dynamics", "so2") else affine_tol
            if value > limit:
                return False
        return True


class _Tracker:
    def __init__(self, names):
        self.residuals = dict.fromkeys(names, 0.0)
        self.worst: dict[str, str] = {}

    def update(self, name: str, value: float, where: str):
        if value > self.residuals[name]:
            self.residuals[name] = float(value)
            self.worst[name] = where


def _face_frame(vertices: np.ndarray, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    start = vertices[i]
    end = vertices[(i + 1) % len(vertices)]
    length = float(np.hypot(*(end - start)))
    tangent = (end - start) / length
    return start, np.array([tangent[1], -tangent[0]]), tangent, length


def audit_plan(task: "TaskSpec", segments: list[KnotTrajectory]) -> AuditReport:
    """Re-evaluate the constraints of a stitched plan.

    Families: dynamics (Euler residual), so2 (|‖r‖² − 1|), friction (cone
    violation), contact (pusher off the face or outside its extent), penetration
    (pusher closer than its radius), continuity (segment boundaries), endpoints
    (initial and target states), workspace (slider CoM outside the box).
    """
    vertices = np.asarray(task.geometry.vertices, dtype=float)
    polygon = Polygon(vertices)
    rho = task.pusher.radius
    half = task.workspace_side / 2
    mu = task.friction.mu_pusher
    track = _Tracker(
        ["dynamics", "so2", "friction", "contact", "penetration", "continuity", "endpoints", "workspace"]
    )

    for s, seg in enumerate(segments):
        states, inputs = np.asarray(seg.states), np.asarray(seg.inputs)
        for k, x in enumerate(states):
            where = f"{seg.mode}[{k}]"
            track.update("so2", abs(float(x[2:4] @ x[2:4]) - 1.0), where)
            track.update("workspace", max(0.0, float(np.max(np.abs(x[0:2]))) - half), where)
            clearance = polygon.exterior.distance(Point(x[4], x[5]))
            if polygon.contains(Point(x[4], x[5])):
                clearance = -clearance
            track.update("penetration", max(0.0, rho - clearance), where)
        for k in range(len(inputs)):
            where = f"{seg.mode}[{k}]"
            in_contact = seg.mode.kind is ModeKind.CONTACT
            p_c = seg.contact_points[k] if in_contact else np.zeros(2)
            residual = euler_step_residual(states[k], states[k + 1], inputs[k], seg.h, task.model, p_c)
            track.update("dynamics", float(np.max(np.abs(residual))), where)
            if not in_contact:
                track.update("contact", float(np.max(np.abs(inputs[k, 0:2]))), where)
                continue
            start, normal, tangent, length = _face_frame(vertices, seg.mode.face)
            decomposition = ContactForceDecomposition.from_force(inputs[k, 0:2], normal, tangent, seg.mode.face)
            lam_n, margin = friction_cone_residuals(decomposition, mu)
            track.update("friction", max(0.0, -lam_n, -margin), where)
            offset = p_c - start
            along = float(offset @ tangent)
            off_face = abs(float(offset @ normal))
            beyond = max(0.0, -along, along - length)
            for knot in (k, k + 1):
                pusher_offset = states[knot, 4:6] - start
                track.update("contact", abs(float(pusher_offset @ normal) - rho), f"{seg.mode}[{knot}]")
            track.update("contact", max(off_face, beyond), where)
        if s + 1 < len(segments):
            jump = float(np.max(np.abs(states[-1] - np.asarray(segments[s + 1].states[0]))))
            track.update("continuity", jump, f"{seg.mode}->{segments[s + 1].mode}")

    if segments:
        first = np.asarray(segments[0].states[0])
        last = np.asarray(segments[-1].states[-1])
        track.update("endpoints", float(np.max(np.abs(first - task.initial.state()))), "initial")
        track.update("endpoints", float(np.max(np.abs(last - task.target.state()))), "target")

    report = AuditReport(residuals=track.residuals, worst=track.worst)
    if not report.passed():
        logger.warning("Audit found violations: %s", {k: v for k, v in report.worst.items()})
    return report
