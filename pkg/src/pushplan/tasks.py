"""Task files and random task sampling.

A task file is a JSON document (``schema_version`` 1):

    {
      "schema_version": 1,
      "name": "box-straight",
      "geometry": {"preset": "box"},            # or {"vertices": [[x, y], ...]}
      "initial": {"slider_position": [0, 0], "slider_angle": 0, "pusher_position": [-0.2, 0]},
      "target":  {"slider_position": [0.1, 0], "slider_angle": 0, "pusher_position": [-0.2, 0]},
      "friction": {...}, "weights": {...},      # optional, partial; defaults fill the rest
      "pusher_radius": 0.01, "knots": 3, "timestep": 0.5, "workspace_side": 0.6, "seed": 0
    }

Unknown keys are rejected. Errors name the offending field path and, where it
can be found, the line it is on.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from shapely.geometry import Point

from .config import transcription_default
from .geometry import RegionDecomposition, SliderGeometry, decompose_regions, min_gap
from .planner import Configuration, TaskSpec
from .types import (
    CostWeights,
    FrictionParams,
    NoContainingRegion,
    PushPlanError,
    PusherSpec,
    TaskFileError,
)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

SCHEMA_VERSION = 1
ANTIPODAL_MARGIN = 1e-3  # resample when |Δθ| is this close to π
MAX_REJECTIONS = 10_000

_TOP_LEVEL = {
    "schema_version",
    "name",
    "geometry",
    "initial",
    "target",
    "friction",
    "weights",
    "pusher_radius",
    "knots",
    "timestep",
    "workspace_side",
    "seed",
}
_CONFIGURATION = {"slider_position", "slider_angle", "pusher_position"}


@dataclass(frozen=True, eq=False)
class TaskFile:
    """A parsed task and the seed it asks for."""

    task: TaskSpec
    seed: int = 0


class _Reader:
    """Walks a parsed document, reporting errors with field paths and line numbers."""

    def __init__(self, text: str, source: str):
        self.lines = text.splitlines()
        self.source = source

    def locate(self, path: str) -> int | None:
        """Line of the last key in ``path``, searched below each enclosing key in turn."""
        line = None
        start = 0
        for part in path.split("."):
            key = part.split("[", 1)[0]
            found = next((i for i in range(start, len(self.lines)) if f'"{key}"' in self.lines[i]), None)
            if found is None:
                break
            line, start = found + 1, found
        return line

    def fail(self, path: str, message: str):
        line = self.locate(path)
        where = f"{self.source}:{line}" if line else self.source
        raise TaskFileError(f"{where}: {path}: {message}")

    def mapping(self, value, path: str, allowed: set[str]) -> dict:
        if not isinstance(value, dict):
            self.fail(path, f"expected an object, got {type(value).__name__}")
        unknown = sorted(set(value) - allowed)
        if unknown:
            self.fail(f"{path}.{unknown[0]}" if path else unknown[0], f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return value

    def number(self, value, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, int | float):
            self.fail(path, f"expected a number, got {value!r}")
        return float(value)

    def integer(self, value, path: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        return int(value)

    def vector(self, value, path: str, size: int = 2) -> tuple[float, ...]:
        if not isinstance(value, list) or len(value) != size:
            self.fail(path, f"expected a list of {size} numbers, got {value!r}")
        return tuple(self.number(v, f"{path}[{i}]") for i, v in enumerate(value))

    def required(self, data: dict, key: str, path: str):
        if key not in data:
            self.fail(f"{path}.{key}" if path else key, "missing required field")
        return data[key]


def _configuration(reader: _Reader, value, path: str) -> Configuration:
    data = reader.mapping(value, path, _CONFIGURATION)
    return Configuration(
        slider_position=reader.vector(reader.required(data, "slider_position", path), f"{path}.slider_position"),
        slider_angle=reader.number(reader.required(data, "slider_angle", path), f"{path}.slider_angle"),
        pusher_position=reader.vector(reader.required(data, "pusher_position", path), f"{path}.pusher_position"),
    )


def _geometry(reader: _Reader, value) -> SliderGeometry:
    data = reader.mapping(value, "geometry", {"preset", "vertices"})
    if ("preset" in data) == ("vertices" in data):
        reader.fail("geometry", "give exactly one of 'preset' or 'vertices'")
    if "preset" in data:
        try:
            return SliderGeometry.from_preset(str(data["preset"]))
        except ValueError as e:
            reader.fail("geometry.preset", str(e))
    vertices = data["vertices"]
    if not isinstance(vertices, list):
        reader.fail("geometry.vertices", "expected a list of [x, y] pairs")
    points = [reader.vector(v, f"geometry.vertices[{i}]") for i, v in enumerate(vertices)]
    return SliderGeometry.from_vertices(points)


def _fragment(reader: _Reader, data: dict, key: str, allowed) -> dict:
    if key not in data:
        return {}
    fragment = reader.mapping(data[key], key, set(allowed))
    return {k: reader.number(v, f"{key}.{k}") for k, v in fragment.items()}


def parse_task(text: str, source: str = "<task>") -> TaskFile:
    """Parse and validate a task document.

    Raises:
        TaskFileError: On malformed JSON, schema violations or physically invalid tasks
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise TaskFileError(f"{source}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e

    reader = _Reader(text, source)
    data = reader.mapping(document, "", _TOP_LEVEL)
    version = reader.integer(reader.required(data, "schema_version", ""), "schema_version")
    if version != SCHEMA_VERSION:
        reader.fail("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")

    try:
        geometry = _geometry(reader, reader.required(data, "geometry", ""))
        friction = FrictionParams.from_dict(_fragment(reader, data, "friction", FrictionParams.__dataclass_fields__))
        weights = CostWeights.from_dict(_fragment(reader, data, "weights", CostWeights.__dataclass_fields__))
        options = {}
        if "pusher_radius" in data:
            options["pusher"] = PusherSpec(radius=reader.number(data["pusher_radius"], "pusher_radius"))
        if "knots" in data:
            options["num_knots"] = reader.integer(data["knots"], "knots")
        if "timestep" in data:
            options["h"] = reader.number(data["timestep"], "timestep")
        if "workspace_side" in data:
            options["workspace_side"] = reader.number(data["workspace_side"], "workspace_side")
        task = TaskSpec(
            geometry=geometry,
            initial=_configuration(reader, reader.required(data, "initial", ""), "initial"),
            target=_configuration(reader, reader.required(data, "target", ""), "target"),
            friction=friction,
            weights=weights,
            name=str(data.get("name", Path(source).stem)),
            **options,
        )
    except TaskFileError:
        raise
    except PushPlanError as e:
        raise TaskFileError(f"{source}: invalid task: {e}") from e
    seed = reader.integer(data.get("seed", 0), "seed")
    logger.debug("Loaded task '%s' from %s", task.name, source)
    return TaskFile(task=task, seed=seed)


def load_task(path: str | Path) -> TaskFile:
    """Read and validate a task file.

    Raises:
        FileNotFoundError: If the file does not exist
        TaskFileError: On any schema or validity problem
    """
    path = Path(path)
    return parse_task(path.read_text(encoding="utf-8"), source=str(path))


def task_document(task: TaskSpec, seed: int = 0) -> dict:
    """JSON document that :func:`parse_task` reads back into an equivalent task."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": task.name,
        "geometry": {"vertices": task.geometry.vertices.tolist()},
        "initial": task.initial.to_dict(),
        "target": task.target.to_dict(),
        "friction": task.friction.to_dict(),
        "weights": task.weights.to_dict(),
        "pusher_radius": task.pusher.radius,
        "knots": task.num_knots,
        "timestep": task.h,
        "workspace_side": task.workspace_side,
        "seed": seed,
    }


# =============================================================================
# Sampling
# =============================================================================


def _wrap(angle: float) -> float:
    return (angle + np.pi) % (2 * np.pi) - np.pi


def _free_pusher_position(decomp: RegionDecomposition, rng: np.random.Generator) -> tuple[float, float]:
    half = decomp.workspace_side / 2
    for _ in range(MAX_REJECTIONS):
        p = rng.uniform(-half, half, size=2)
        try:
            min_gap(decomp, p)
        except NoContainingRegion:
            continue
        if any(poly.contains(Point(p[0], p[1])) for poly in decomp.region_polygons):
            return float(p[0]), float(p[1])
    raise TaskFileError(f"No collision-free pusher position found after {MAX_REJECTIONS} samples")


def sample_task(
    preset: str,
    rng: np.random.Generator,
    name: str = "sample",
    num_knots: int | None = None,
) -> TaskSpec:
    """Draw a random task: slider poses uniform in the workspace, θ uniform in [−π, π),
    pusher positions uniform over the collision-free set (rejection sampling).

    Pose pairs whose rotation differs by π within 1e-3 are redrawn.
    """
    geometry = SliderGeometry.from_preset(preset)
    side = float(transcription_default("workspace_side"))
    half = side / 2
    base = {} if num_knots is None else {"num_knots": num_knots}
    decomp = decompose_regions(geometry, PusherSpec(radius=float(transcription_default("pusher_radius"))), side)

    while True:
        theta_s = float(rng.uniform(-np.pi, np.pi))
        theta_t = float(rng.uniform(-np.pi, np.pi))
        if abs(abs(_wrap(theta_t - theta_s)) - np.pi) > ANTIPODAL_MARGIN:
            break
    initial = Configuration(
        tuple(float(v) for v in rng.uniform(-half, half, size=2)),
        theta_s,
        _free_pusher_position(decomp, rng),
    )
    target = Configuration(
        tuple(float(v) for v in rng.uniform(-half, half, size=2)),
        theta_t,
        _free_pusher_position(decomp, rng),
    )
    return TaskSpec(geometry=geometry, initial=initial, target=target, name=name, **base)


def preset_task(preset: str, num_knots: int | None = None) -> TaskSpec:
    """Stationary task on a preset slider, used to size the relaxation without a task file."""
    geometry = SliderGeometry.from_preset(preset)
    reach = 0.8 * float(transcription_default("workspace_side")) / 2
    config = Configuration((0.0, 0.0), 0.0, (0.0, reach))
    base = {} if num_knots is None else {"num_knots": num_knots}
    return TaskSpec(geometry=geometry, initial=config, target=config, name=preset, **base)
