"""Flat ``key = value`` run configuration, presets and override layering.

Resolution order (later wins): RunConfig defaults, preset, config file,
``TMQC_<KEY>`` environment variables, command-line flags.

File format: one ``key = value`` per line, ``#`` starts a comment, blank lines
are ignored.  ``none`` (any case) clears an optional field.
"""
from __future__ import annotations

import os
import typing
from dataclasses import fields
from typing import Mapping, Optional

from .ensemble import RunConfig
from .errors import DomainError

ENV_PREFIX = "TMQC_"

# run-level presets; "impurity" keeps the physical (site) basis unless overridden
PRESETS = {
    "pristine": dict(N=30, J=1.0, delta=0.0, omega=0.2, g=1.0, T=1.0, basis="fourier"),
    "impurity": dict(N=30, J=1.0, delta=2.0, omega=0.2, g=1.0, T=1.0, basis="site"),
    "eigeninspect": dict(N=100, J=1.0, delta=2.0, omega=0.2, g=1.0, T=1.0, basis="eigen"),
}


class ConfigError(DomainError):
    """Unknown key, malformed value or invalid combination of settings."""


def _field_types() -> dict:
    hints = typing.get_type_hints(RunConfig)
    out = {}
    for f in fields(RunConfig):
        tp = hints[f.name]
        optional = False
        args = typing.get_args(tp)
        if type(None) in args:
            optional = True
            tp = next(a for a in args if a is not type(None))
        out[f.name] = (tp, optional)
    return out


FIELD_TYPES = _field_types()


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(key: str, text):
    """Convert ``text`` to the type of RunConfig field ``key``."""
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(FIELD_TYPES)}")
    tp, optional = FIELD_TYPES[key]
    if not isinstance(text, str):
        if text is None and not optional:
            raise ConfigError(f"{key} may not be empty")
        return text
    raw = text.strip()
    if optional and raw.lower() in ("", "none", "null"):
        return None
    try:
        if tp is bool:
            return _parse_bool(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = parse_value(key, value)
    return out


def load_file(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return parse_text(text, str(path))


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    lower = {k.lower(): k for k in FIELD_TYPES}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = lower.get(name[len(ENV_PREFIX):].lower())
        if key is None:
            raise ConfigError(f"environment variable {name} does not name a config key")
        out[key] = parse_value(key, value)
    return out


def resolve(preset: Optional[str] = None, file: Optional[str] = None,
            environ: Optional[Mapping[str, str]] = None, flags: Optional[dict] = None) -> RunConfig:
    values: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        values.update(PRESETS[preset])
    if file is not None:
        values.update(load_file(file))
    values.update(env_overrides(environ))
    for key, value in (flags or {}).items():
        if value is not None:
            values[key] = parse_value(key, value)
    # a rule given at a higher level replaces any truncation rule set below it
    rules = [k for k in ("truncate_frac", "ecut", "kcut") if (flags or {}).get(k) is not None]
    if rules:
        for k in ("truncate_frac", "ecut", "kcut"):
            if k not in rules:
                values.pop(k, None)
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def format_config(cfg: RunConfig) -> str:
    """Config as ``key = value`` lines; parse_text(format_config(c)) rebuilds c."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            s = "none"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"


def config_dict(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
