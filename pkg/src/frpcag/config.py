"""Key = value configuration files (one assignment per line, # comments)."""

from typing import Union

Scalar = Union[int, float, bool, str]


class ConfigError(ValueError):
    """Raised for unparseable lines, unknown keys or bad values."""


def _parse_scalar(text: str) -> Scalar:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip("\"'")


def parse_keyvalue_text(text: str, source: str = "<config>") -> dict:
    """Parse 'key = value' lines; comma-separated values become lists."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if "," in value:
            out[key] = [_parse_scalar(v.strip()) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


def parse_keyvalue(path) -> dict:
    with open(path) as fh:
        return parse_keyvalue_text(fh.read(), source=str(path))


def check_keys(cfg: dict, allowed, source: str = "<config>") -> None:
    """Reject unknown keys by name so typos surface immediately."""
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"{source}: unknown key {key!r}")
