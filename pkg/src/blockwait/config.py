"""Flat key=value configuration files.

Lines look like ``section.key = value`` (e.g. ``sim.arrival_rate = 12``
or ``forest.tree_count = 800``). '#' starts a comment. Values are kept
as strings and coerced when applied to a config dataclass, so the same
mechanism backs both config files and repeatable ``--set`` CLI flags;
CLI values override file values.
"""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path


class ConfigError(ValueError):
    pass


def load_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_number}: expected 'section.key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def parse_set_overrides(pairs) -> dict[str, str]:
    """Parse repeated --set section.key=value flags."""
    values: dict[str, str] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(text: str, target_type):
    origin = typing.get_origin(target_type)
    if origin is typing.Union:  # Optional[...]
        args = [a for a in typing.get_args(target_type) if a is not type(None)]
        if text.lower() in ("none", "null", ""):
            return None
        return _coerce(text, args[0])
    if origin is tuple:
        item_type = typing.get_args(target_type)[0]
        parts = [p for p in text.replace(",", " ").split() if p]
        return tuple(_coerce(p, item_type) for p in parts)
    if target_type is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text


def build_dataclass(cls, values: dict[str, str], section: str, base=None):
    """Instantiate a config dataclass from 'section.field' string values."""
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{section}.{f.name}"
        if key in values:
            try:
                kwargs[f.name] = _coerce(values[key], hints[f.name])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
    if base is None:
        base = cls()
    return dataclasses.replace(base, **kwargs)


def known_keys(cls, section: str) -> list[str]:
    return [f"{section}.{f.name}" for f in dataclasses.fields(cls)]
