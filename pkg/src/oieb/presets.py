"""Named parameter sets shipped in ``presets.yaml``."""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional, Union

import yaml

from .errors import DomainError
from .maps import ModelParams

PARAM_FIELDS = ("tau", "t_stim", "delta_t", "delta_phi")

# presets with both rules active; these drive the 2D-map checks
MAP_PRESETS = ("fig4", "fig6a", "fig6c", "fig8a", "fig8b", "fig8c", "fig8d", "fig8e", "fig8f")


def load_presets(path: Optional[Union[str, Path]] = None) -> dict[str, dict[str, float]]:
    """Read the preset table; defaults to the copy bundled with the package."""
    if path is None:
        text = resources.files("oieb").joinpath("presets.yaml").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = yaml.safe_load(text) or {}
    table = {}
    for name, entry in raw.items():
        if not isinstance(entry, dict):
            raise DomainError(f"preset {name!r} must be a mapping")
        missing = [k for k in PARAM_FIELDS if k not in entry]
        if missing:
            raise DomainError(f"preset {name!r} lacks {', '.join(missing)}")
        table[str(name)] = {k: float(entry[k]) for k in PARAM_FIELDS}
    return table


def get_preset(name: str, path: Optional[Union[str, Path]] = None) -> ModelParams:
    table = load_presets(path)
    if name not in table:
        raise DomainError(f"unknown preset {name!r}; available: {', '.join(sorted(table))}")
    return ModelParams(**table[name])
