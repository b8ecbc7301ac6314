"""Deployment configuration: one JSON file plus environment overrides.

Environment variables use the ANNOFLOW_ prefix and win over the file, e.g.
ANNOFLOW_PORT=9000 or ANNOFLOW_AP_PATH=protocols/task.ap.json.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from importlib import import_module
from pathlib import Path
from typing import Mapping

from .registry import ApiRegistry

_ENV_PREFIX = "ANNOFLOW_"
_INT_KEYS = {"port", "lease_minutes", "token_ttl_minutes"}


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    store_path: str = "annoflow.db"
    lease_minutes: int | None = None      # when set, written into the options table
    ap_path: str | None = None            # installed protocol source
    static_dir: str | None = None         # built client bundle to serve
    registry: str | None = None           # "package.module:REGISTRY"
    token_ttl_minutes: int = 720


def load_config(path: str | Path | None = None,
                env: Mapping[str, str] | None = None) -> ServerConfig:
    values: dict = {}
    known = {f.name for f in fields(ServerConfig)}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError("config file must contain a JSON object")
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(raw)
    env = os.environ if env is None else env
    for name in known:
        env_value = env.get(_ENV_PREFIX + name.upper())
        if env_value is not None:
            values[name] = int(env_value) if name in _INT_KEYS else env_value
    return ServerConfig(**values)


def load_registry(spec: str | None) -> ApiRegistry:
    """Import a registry given as ``module.path:attribute``."""
    if not spec:
        return ApiRegistry()
    module_name, _, attribute = spec.partition(":")
    if not attribute:
        raise ValueError("registry must be given as 'module.path:attribute'")
    registry = getattr(import_module(module_name), attribute)
    if not isinstance(registry, ApiRegistry):
        raise TypeError(f"{spec} is not an ApiRegistry")
    return registry
