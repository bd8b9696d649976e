"""Versioned JSON configuration.

``defaults.json`` ships with the package and holds every experiment default.
A user file only needs the keys it changes; it is merged into the defaults
section by section.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Optional, Union

SCHEMA = 1


class ConfigError(ValueError):
    pass


def load_defaults() -> dict:
    with resources.files(__package__).joinpath("defaults.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: Optional[Union[str, Path]] = None) -> dict:
    """Defaults, overridden by the file at ``path`` when given."""
    cfg = load_defaults()
    if path is None:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config file must hold a JSON object")
    schema = user.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"config schema {schema!r} is not supported (expected {SCHEMA})")
    return _merge(cfg, user)
