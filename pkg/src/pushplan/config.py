"""Package defaults loaded from ``defaults.yml``.

The YAML file is read once and cached; callers receive deep copies of the
sections they ask for through the typed ``from_dict`` constructors in
:mod:`pushplan.types`.
"""

from functools import cache
from pathlib import Path

import yaml

_DEFAULTS_FILE = Path(__file__).parent / "defaults.yml"


@cache
def get_defaults() -> dict:
    """Load planner defaults from YAML (cached, thread-safe).

    Returns:
        Parsed mapping with ``weights``, ``friction``, ``transcription``,
        ``solver``, ``rounding``, ``refinement`` and ``presets`` sections.

    Raises:
        FileNotFoundError: If the packaged defaults file is missing
    """
    if not _DEFAULTS_FILE.exists():
        raise FileNotFoundError(f"Defaults file not found: {_DEFAULTS_FILE}")

    with open(_DEFAULTS_FILE, encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    return data


def get_preset_vertices(name: str) -> list[list[float]]:
    """Return the raw vertex list of a slider preset.

    Args:
        name: Preset name (``box`` or ``tee``)

    Raises:
        ValueError: If the preset is unknown
    """
    presets = get_defaults().get("presets", {})
    if name not in presets:
        available = ", ".join(sorted(presets))
        raise ValueError(f"Unknown slider preset '{name}'. Available presets: {available}")
    return [list(map(float, v)) for v in presets[name]["vertices"]]


def transcription_default(key: str) -> float:
    """Look up a scalar default from the ``transcription`` section."""
    return get_defaults()["transcription"][key]
