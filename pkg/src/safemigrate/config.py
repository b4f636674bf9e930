"""Pipeline configuration: defaults, ``<root>/safemigrate.toml``, environment, flags.

Later sources override earlier ones in that order.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InvalidArgument

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_FILE = "safemigrate.toml"
ENV_PREFIX = "SAFEMIGRATE_"


@dataclass
class PipelineConfig:
    retry_budget: int = 5
    struct_retry_budget: int = 3
    max_iter: int = 40
    test_timeout_s: float = 30.0
    provider_retries: int = 2
    provider: str | None = None
    system_aggregate_names: list[str] = field(default_factory=list)
    handler_registration_names: list[str] = field(default_factory=lambda: ["signal", "sigaction"])

    @property
    def temperature(self) -> float:
        # fixed for reproducibility; not configurable
        return 0.0

    def update(self, values: dict) -> None:
        known = {f.name: f for f in fields(self)}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in known:
                raise InvalidArgument(f"unknown configuration key `{key}`")
            setattr(self, key, _coerce(key, known[key].type, raw))


def _coerce(key: str, type_name, raw):
    t = str(type_name)
    try:
        if t.startswith("list"):
            if isinstance(raw, str):
                return [x.strip() for x in raw.split(",") if x.strip()]
            return [str(x) for x in raw]
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"bad value for `{key}`: {raw!r}") from exc


def load_config(
    root: Path | None, overrides: dict | None = None, env: dict | None = None, path: Path | None = None
) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None and not Path(path).is_file():
        raise InvalidArgument(f"configuration file not found: {path}")
    if path is None and root is not None:
        path = Path(root) / CONFIG_FILE
    if path is not None:
        if Path(path).is_file():
            try:
                cfg.update(tomllib.loads(Path(path).read_text()))
            except tomllib.TOMLDecodeError as exc:
                raise InvalidArgument(f"{path}: {exc}") from exc
    env = os.environ if env is None else env
    names = {f.name for f in fields(PipelineConfig)}
    cfg.update({k[len(ENV_PREFIX):].lower(): v for k, v in env.items()
                if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):].lower() in names})
    cfg.update(overrides or {})
    return cfg
