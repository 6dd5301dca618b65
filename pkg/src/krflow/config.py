"""Flat ``key = value`` configuration files with ``#`` comments."""

import dataclasses

from .dynamics import SimConfig
from .errors import ConfigError

_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def parse_config(text, base=None):
    """Parse configuration text into a validated :class:`SimConfig`.

    Unknown keys, duplicate keys and malformed values raise
    :class:`ConfigError` naming the offending field and line.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown field {key!r} (known: {', '.join(_FIELDS)})")
        if key in values:
            raise ConfigError(f"line {lineno}: field {key!r} given twice")
        cast = _CASTS[_FIELDS[key].type if isinstance(_FIELDS[key].type, str) else _FIELDS[key].type.__name__]
        try:
            values[key] = cast(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: field {key!r}: cannot read {val!r} as {cast.__name__}") from None
    if "kind" in values:
        values["kind"] = values["kind"].lower()
    cfg = dataclasses.replace(base or SimConfig(), **values)
    return cfg.validate()


def read_config(path, base=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base)


def format_config(cfg):
    """Canonical text form; ``parse_config(format_config(c)) == c``."""
    return "".join(f"{f} = {getattr(cfg, f)!r}\n".replace("'", "") for f in _FIELDS)


def config_dict(cfg):
    return dataclasses.asdict(cfg)
