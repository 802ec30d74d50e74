"""Flat ``section.key = value`` run configuration.

Precedence is defaults < config file < ``--set`` overrides. Every key is typed
by its default; unknown keys and malformed values are configuration errors.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import IdaPbcError
from .model import Tolerances
from .numerics import StepConfig


class ConfigError(IdaPbcError):
    """Bad, missing or inconsistent configuration (CLI exit code 2)."""


AUTO = "auto"

# kinds: float, int, str, bool, floats (comma list), auto_float ("auto" or float),
# opt_floats ("default" or comma list)
GENERAL = {
    "system.name": ("str", "maglev"),
    "system.custom": ("str", ""),
    "grid.count": ("int", 512),
    "grid.seed": ("int", 0),
    "grid.method": ("str", "lhs"),
    "design.m2": ("auto_float", AUTO),
    "design.margin": ("auto_float", AUTO),
    "sim.dt": ("float", 1e-4),
    "sim.t_end": ("float", 2.0),
    "sim.x0": ("opt_floats", "default"),
    "sim.record_every": ("int", 1),
    "sim.svg": ("bool", True),
    "sweep.gain1": ("str", "p1"),
    "sweep.values1": ("floats", ()),
    "sweep.gain2": ("str", "p2"),
    "sweep.values2": ("floats", ()),
    "sweep.t_end": ("float", 1.0),
    "sweep.conv_tol": ("float", 1e-5),
    "sweep.workers": ("int", 1),
    "output.dir": ("str", "idapbc-out"),
}
for _f in dataclasses.fields(Tolerances):
    GENERAL[f"tol.{_f.name}"] = ("float", _f.default)
for _f in dataclasses.fields(StepConfig):
    GENERAL[f"numerics.{_f.name}"] = ("int" if _f.type in (int, "int") else "float", _f.default)


def parse_lines(text: str, source: str = "config") -> dict[str, str]:
    """Raw ``key -> value`` strings from config text; later lines win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or "." not in key or not value:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        out[key] = value
    return out


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or "." not in key.strip() or not value.strip():
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _convert(key: str, kind: str, text: str):
    try:
        if kind == "float":
            return float(text)
        if kind == "int":
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind == "str":
            return text
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            return low in ("true", "yes", "1")
        if kind == "floats":
            return tuple(float(v) for v in text.split(",") if v.strip())
        if kind == "auto_float":
            return AUTO if text.lower() == AUTO else float(text)
        if kind == "opt_floats":
            return "default" if text.lower() == "default" else tuple(float(v) for v in text.split(","))
    except ValueError:
        pass
    raise ConfigError(f"invalid value for {key}: {text!r}")


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def load(path: str | Path | None, overrides: dict[str, str], system_schema) -> dict:
    """Resolve the effective configuration.

    ``system_schema(name)`` returns the extra ``(kind, default)`` entries and
    default overrides for the named system (params, gains, sim.x0, ...).
    """
    raw = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        raw.update(parse_lines(text, str(p)))
    raw.update(overrides)

    name = raw.get("system.name", GENERAL["system.name"][1])
    if name == "custom":
        name = raw.get("system.custom", "")
        if not name:
            raise ConfigError("system.name = custom requires system.custom = <registered name>")
    extra, system_defaults = system_schema(name)
    schema = dict(GENERAL)
    schema.update(extra)

    cfg = {key: default for key, (kind, default) in schema.items()}
    cfg.update(system_defaults)
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _convert(key, schema[key][0], text)
    cfg["system.resolved"] = name
    return cfg


def section(cfg: dict, prefix: str) -> dict:
    """Entries under ``prefix.`` with the prefix stripped."""
    n = len(prefix) + 1
    return {k[n:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


def tolerances(cfg: dict) -> Tolerances:
    return Tolerances(**section(cfg, "tol"))


def steps(cfg: dict) -> StepConfig:
    return StepConfig(**section(cfg, "numerics"))
