"""Flat ``key = value`` configuration files."""
from __future__ import annotations

import dataclasses
import os
from importlib import resources

from .errors import ConfigError
from .trainer import REALIZED_ACTION_ETA0, TrainConfig

# keys accepted besides the TrainConfig fields
EXTRA_KEYS = {"run_id": str, "reference_run": str}


def parse_config_text(text: str, source: str = "<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        return parse_config_text(fh.read(), source=str(path))


def shipped_config_path(name: str) -> str:
    return str(resources.files("nashnet") / "configs" / f"{name}.cfg")


def shipped_configs() -> list[str]:
    folder = resources.files("nashnet") / "configs"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


def _convert(key, typ, value):
    try:
        if typ is bool:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if typ is int:
            # allow 2**20 style sizes
            if "**" in value:
                base, exp = value.split("**", 1)
                return int(base) ** int(exp)
            return int(float(value)) if "e" in value.lower() else int(value)
        return typ(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {value!r} as {typ.__name__}") from None


def train_config(values: dict[str, str], **overrides) -> tuple[TrainConfig, dict]:
    """Build a TrainConfig; returns it together with the extra keys' values."""
    types = {f.name: type(f.default) for f in dataclasses.fields(TrainConfig)}
    kw, extra = {}, {k: "" for k in EXTRA_KEYS}
    for key, value in values.items():
        if key in types:
            kw[key] = _convert(key, types[key], value)
        elif key in EXTRA_KEYS:
            extra[key] = _convert(key, EXTRA_KEYS[key], value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key, value in overrides.items():
        if value is not None:
            kw[key] = value
    # per-layer defaults follow the first player unless set explicitly
    kw.setdefault("layers2", kw.get("layers1", TrainConfig.layers1))
    kw.setdefault("width2", kw.get("width1", TrainConfig.width1))
    if kw.get("feedback") == "realized_action" and "eta0" not in kw:
        kw["eta0"] = REALIZED_ACTION_ETA0
    try:
        return TrainConfig(**kw), extra
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_train_config(path, **overrides):
    return train_config(read_config(path), **overrides)


def config_text(cfg: TrainConfig, extra=None) -> str:
    from .formats import fmt

    lines = [f"{k} = {fmt(v)}" for k, v in cfg.items()]
    lines += [f"{k} = {v}" for k, v in (extra or {}).items() if v]
    return "\n".join(lines) + "\n"
