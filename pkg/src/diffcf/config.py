"""Config files, named presets, and precedence merging.

Precedence: built-in defaults < preset/config file < explicit overrides.
The merged effective config is what lands in run manifests.
"""

from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine.config import AttackConfig, RefineConfig
from .errors import ConfigurationError

PRESET_PACKAGE = "diffcf.presets"


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None


def available_presets() -> list[str]:
    files = resources.files(PRESET_PACKAGE)
    return sorted(p.name[: -len(".toml")] for p in files.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> dict:
    files = resources.files(PRESET_PACKAGE)
    candidate = files / f"{name}.toml"
    if not candidate.is_file():
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(available_presets())}"
        )
    return tomllib.loads(candidate.read_text())


def merge_configs(*layers: dict) -> dict:
    """Later layers win; nested dicts merge key-wise."""
    out: dict[str, Any] = {}
    for layer in layers:
        for key, value in layer.items():
            if isinstance(value, dict) and isinstance(out.get(key), dict):
                out[key] = merge_configs(out[key], value)
            else:
                out[key] = value
    return out


def _apply_section(cls, section: dict, *, context: str):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"unknown {context} keys: {', '.join(sorted(unknown))}")
    kwargs = dict(section)
    if "diversity_respacings" in kwargs and kwargs["diversity_respacings"] is not None:
        kwargs["diversity_respacings"] = tuple(kwargs["diversity_respacings"])
    return cls(**kwargs)


def build_attack_config(merged: dict) -> AttackConfig:
    return _apply_section(AttackConfig, merged.get("attack", {}), context="[attack]")


def build_refine_config(merged: dict) -> RefineConfig:
    return _apply_section(RefineConfig, merged.get("refine", {}), context="[refine]")
