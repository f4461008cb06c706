"""Flat key=value experiment configs.

One line per setting, dotted names group settings (env.kind, run.n_paths),
'#' starts a comment, blanks are skipped.  Parsing is strict: unknown keys,
repeated keys and unparseable values all name the offending line.  The
serialised form is canonical (sorted keys, fixed float formatting), so a
config can be hashed for caching and survives a round trip unchanged.
"""
from __future__ import annotations

import hashlib

from .errors import ConfigError


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key -> value strings, before any typing."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def format_config(mapping: dict) -> str:
    lines = [f"{k} = {format_value(v)}" for k, v in sorted(mapping.items())]
    return "\n".join(lines) + "\n"


def config_digest(mapping: dict, extra: str = "") -> str:
    body = format_config(mapping) + extra
    return hashlib.sha256(body.encode()).hexdigest()


def coerce(key: str, value, typ):
    """Parse one raw value as ``typ``; errors carry the key name.

    Already-typed values pass through, so a mapping built by code is
    accepted the same way as one parsed from a file.
    """
    try:
        if typ is str:
            return str(value)
        if typ is bool:
            if isinstance(value, bool):
                return value
            low = str(value).lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if typ is int:
            return int(value) if not isinstance(value, float) else _exact_int(value)
        if typ is float:
            return float(value)
        if typ == "floats":
            if isinstance(value, (tuple, list)):
                return tuple(float(v) for v in value)
            parts = [p for p in value.split(",") if p.strip()]
            if not parts:
                raise ValueError("empty list")
            return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r} as {typ}") from exc
    raise ConfigError(f"config key {key!r}: unsupported type {typ!r}")


def _exact_int(value: float) -> int:
    if value != int(value):
        raise ValueError(value)
    return int(value)
