"""Dataclass configs <-> plain dicts <-> TOML files.

Overrides are partial: only keys present in the file replace defaults.
"""

from __future__ import annotations

import dataclasses
import enum
import re
import typing
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from .planner import PlannerConfig


class ConfigError(ValueError):
    pass


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _coerce(value, annotation, current):
    if value is None:
        return None
    if dataclasses.is_dataclass(current):
        if not isinstance(value, dict):
            raise ConfigError(f"expected a table for {type(current).__name__}")
        return override(current, value)
    if isinstance(current, np.ndarray):
        arr = np.asarray(value, dtype=float)
        if arr.shape != current.shape:
            raise ConfigError(f"expected shape {current.shape}, got {arr.shape}")
        return arr
    if isinstance(current, tuple):
        return tuple(value)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}")
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}")
        return float(value)
    if current is None and annotation is not None and "ndarray" in str(annotation):
        return np.asarray(value, dtype=float)
    return value


def override(obj, data: dict):
    """Copy of dataclass ``obj`` with the entries of ``data`` applied recursively."""
    names = {f.name: f for f in dataclasses.fields(obj) if f.init}
    hints = typing.get_type_hints(type(obj))
    changes = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} for {type(obj).__name__}")
        try:
            changes[key] = _coerce(value, hints.get(key), getattr(obj, key))
        except ConfigError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    if isinstance(d, list):
        return [_drop_none(v) for v in d]
    return d


_ARRAY = re.compile(r"\[\n((?:[ ]*[^\[\]\n]+,\n)+)[ ]*\]")


def _compact_arrays(text: str) -> str:
    """Put arrays of scalars (and then arrays of those) on one line."""
    while True:
        new = _ARRAY.sub(lambda m: "[" + ", ".join(v.strip().rstrip(",") for v in m.group(1).splitlines()) + "]", text)
        if new == text:
            return new
        text = new


def dumps(cfg) -> str:
    return _compact_arrays(tomli_w.dumps(_drop_none(to_dict(cfg))))


def load_toml(path) -> dict:
    p = Path(path)
    try:
        with p.open("rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None


def load_planner_config(path=None, base: PlannerConfig | None = None) -> PlannerConfig:
    cfg = base or PlannerConfig()
    if path is None:
        return cfg
    data = load_toml(path)
    return override(cfg, data.get("planner", data))
