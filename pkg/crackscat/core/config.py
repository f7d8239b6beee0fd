from __future__ import annotations

import os
from typing import Any

from dotenv import dotenv_values
from pydantic import ValidationError

from crackscat.core.errors import ConfigError
from crackscat.models.schemas import RunConfig


class ConfigItem(object):
    def __init__(self, field: str, default: Any, *aliases: str):
        self.field = field
        self.def_value = default
        self.aliases = {field.lower(), *(a.lower() for a in aliases)}

    def coerce(self, value: Any) -> Any:
        if isinstance(self.def_value, int):
            return int(str(value).strip())
        if isinstance(self.def_value, float):
            return float(str(value).strip())
        return value


class Defaults:
    K = ConfigItem("k", 1.5, "wavenumber")
    Radius = ConfigItem("radius", 4.0, "R")
    NObs = ConfigItem("n_obs", 40, "N_S")
    NQuad = ConfigItem("n_quad", 10, "N_GAMMA", "N_Γ")
    NSingular = ConfigItem("n_singular", 5, "N")
    AMax = ConfigItem("a_max", 1.0)
    Seed = ConfigItem("seed", 0)
    Threads = ConfigItem("threads", 0)

    # BIE data generation
    NDense = 256
    TruncTol = 1e-10

    @staticmethod
    def items() -> list[ConfigItem]:
        return [v for v in vars(Defaults).values() if isinstance(v, ConfigItem)]

    @staticmethod
    def lookup(key: str) -> ConfigItem | None:
        k = str(key or "").strip().lower()
        for item in Defaults.items():
            if k in item.aliases:
                return item
        return None


def read_config_file(path: str) -> dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    out: dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        item = Defaults.lookup(key)
        if item is None:
            raise ConfigError(f"Unknown config key '{key}' in {path}")
        if raw is None or str(raw).strip() == "":
            continue
        try:
            out[item.field] = item.coerce(raw)
        except ValueError:
            raise ConfigError(f"Bad value for '{key}' in {path}: {raw!r}") from None
    return out


def resolve_config(path: str | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    values = {item.field: item.def_value for item in Defaults.items()}
    if path:
        values.update(read_config_file(path))
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        item = Defaults.lookup(key)
        if item is None:
            raise ConfigError(f"Unknown config key '{key}'")
        values[item.field] = item.coerce(v)
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e.errors()[0].get('msg', e)}") from None


def thread_count(config: RunConfig | None = None) -> int:
    n = config.threads if config is not None else 0
    if n <= 0:
        n = os.cpu_count() or 1
    env = str(os.environ.get("CRACKSCAT_THREADS") or "").strip()
    try:
        cap = int(env) if env else 0
    except ValueError:
        cap = 0
    if cap > 0:
        n = min(n, cap)
    return max(1, n)
