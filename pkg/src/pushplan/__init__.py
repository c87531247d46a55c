"""Pushplan - certified planar-pushing trajectories.

Plans a pusher moving a polygonal slider across a table. Contact modes are
relaxed to semidefinite programs, linked into a graph of convex sets, and the
shortest-path relaxation gives a lower bound on the cost of any plan. Rounded
paths are refined locally, so every plan comes with an optimality gap.

Example:
    >>> from pushplan import Configuration, SliderGeometry, TaskSpec, plan
    >>> task = TaskSpec(
    ...     geometry=SliderGeometry.from_preset("box"),
    ...     initial=Configuration((0.0, 0.0), 0.0, (-0.2, 0.0)),
    ...     target=Configuration((0.1, 0.0), 0.0, (-0.2, 0.0)),
    ... )
    >>> result = plan(task, seed=0)
    >>> print(f"C_round {result.c_round:.3f}, gap {result.gap:.1%}")

Task files:
    >>> from pushplan import load_task
    >>> task_file = load_task("tasks/box.json")
    >>> result = plan(task_file.task, seed=task_file.seed)
"""

from .geometry import SliderGeometry, decompose_regions
from .planner import Configuration, PlanResult, TaskSpec, build_mode_graph, certify_gap, plan
from .tasks import load_task, parse_task, sample_task
from .types import (
    CostWeights,
    FrictionParams,
    NoFeasiblePlan,
    PlannerSettings,
    PushPlanError,
    PusherSpec,
    TaskFileError,
)

__version__ = "0.1.0"

__all__ = [
    # Planning
    "plan",
    "build_mode_graph",
    "certify_gap",
    "PlanResult",
    # Tasks
    "TaskSpec",
    "Configuration",
    "load_task",
    "parse_task",
    "sample_task",
    # Geometry
    "SliderGeometry",
    "decompose_regions",
    # Settings
    "FrictionParams",
    "CostWeights",
    "PusherSpec",
    "PlannerSettings",
    # Errors
    "PushPlanError",
    "NoFeasiblePlan",
    "TaskFileError",
]
