"""SVG rendering of plans.

Each rendered knot is one PatchCollection with gid ``knot-k`` (slider outline,
pusher disk and, in contact, the world-frame force arrow), so the SVG holds one
``<g id="knot-k">`` group per knot. Output is deterministic: the SVG hash salt
is fixed and no date is written.
"""

import io
import logging
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.collections import PatchCollection
from matplotlib.figure import Figure
from matplotlib.patches import Circle, FancyArrow
from matplotlib.patches import Polygon as PolygonPatch

from .geometry import rotation_matrix
from .planner import PlanResult, TaskSpec
from .transcription import ModeKind

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

FORCE_SCALE = 0.02  # meters of arrow per newton
SVG_SALT = "pushplan"


def _knots(result: PlanResult) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Stitched (state, slider-frame force) per knot; the force is the one applied after the knot."""
    knots: list[tuple[np.ndarray, np.ndarray | None]] = []
    for s, seg in enumerate(result.segments):
        start = 0 if s == 0 else 1
        for k in range(start, seg.num_knots):
            force = None
            if seg.mode.kind is ModeKind.CONTACT and k < len(seg.inputs):
                force = np.asarray(seg.inputs[k, 0:2])
            knots.append((np.asarray(seg.states[k]), force))
    return knots


def _knot_patches(task: TaskSpec, state: np.ndarray, force: np.ndarray | None) -> list:
    R = rotation_matrix(state[2:4])
    p_s = state[0:2]
    outline = p_s + task.geometry.vertices @ R.T
    pusher = p_s + R @ state[4:6]
    patches = [
        PolygonPatch(outline, closed=True),
        Circle(pusher, radius=max(task.pusher.radius, 0.004)),
    ]
    if force is not None and np.linalg.norm(force) > 1e-9:
        d = FORCE_SCALE * (R @ force)
        patches.append(FancyArrow(pusher[0], pusher[1], d[0], d[1], width=0.002, length_includes_head=True))
    return patches


def render_plan(result: PlanResult, task: TaskSpec, path: str | Path | None = None, stride: int = 1) -> str:
    """Draw the slider, pusher and forces at every ``stride``-th knot.

    Args:
        result: Planned trajectory
        task: Task it was planned for (geometry, pusher radius, workspace)
        path: Where to write the SVG; only returned when omitted
        stride: Knot sampling interval

    Returns:
        The SVG document
    """
    knots = _knots(result)
    selected = list(range(0, len(knots), max(stride, 1)))
    if knots and selected[-1] != len(knots) - 1:
        selected.append(len(knots) - 1)

    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    colormap = matplotlib.colormaps["viridis"]
    for order, k in enumerate(selected):
        state, force = knots[k]
        color = colormap(order / max(len(selected) - 1, 1))
        collection = PatchCollection(
            _knot_patches(task, state, force),
            facecolor=(*color[:3], 0.15),
            edgecolor=color,
            linewidth=1.0,
        )
        collection.set_gid(f"knot-{k}")
        ax.add_collection(collection)

    half = task.workspace_side / 2
    margin = task.geometry.characteristic_radius
    ax.set_xlim(-half - margin, half + margin)
    ax.set_ylim(-half - margin, half + margin)
    ax.set_aspect("equal")
    ax.set_title(f"{result.task_name}: C_round {result.c_round:.4g}, gap {100 * result.gap:.2f}%")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")

    buffer = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    text = buffer.getvalue()
    if path is not None:
        Path(path).write_text(text)
        logger.info("Wrote %d knots to %s", len(selected), path)
    return text
