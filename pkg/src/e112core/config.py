"""Service configuration: defaults, config-file loading, and flag overrides.

The config file is a JSON tree whose keys mirror the CLI flags; values on
the command line win over the file, which wins over defaults. Content
seeds (operator accounts, resource points, zones, evacuation routes) ride
in the same file so a deployment can ship its static map data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

DAY_S = 86_400.0


@dataclass
class ServiceConfig:
    port: int = 8112
    store: str = "memory"
    cell_deg: float = 0.05
    fault_injection: bool = False   # enables /test/* surfaces; never in production

    otp_code_digits: int = 6
    otp_ttl_s: float = 300.0
    otp_max_attempts: int = 3
    otp_challenges_per_hour: int = 3

    session_ttl_citizen_s: float = 30 * DAY_S
    session_ttl_operator_s: float = 12 * 3600.0

    media_max_bytes: int = 25 * 1024 * 1024

    push_max_attempts: int = 3
    push_backoff_base_s: float = 0.05
    push_drop_rate: float = 0.0

    chat_body_max: int = 2000
    page_limit_max: int = 100
    event_retention: int = 1000
    expire_sweep_interval_s: float = 1.0

    # Content seeds, in canonical entity form minus ids/created_at.
    operators: list[dict[str, Any]] = field(default_factory=list)
    resources: list[dict[str, Any]] = field(default_factory=list)
    zones: list[dict[str, Any]] = field(default_factory=list)
    routes: list[dict[str, Any]] = field(default_factory=list)


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> ServiceConfig:
    known = {f.name for f in fields(ServiceConfig)}
    merged: dict[str, Any] = {}
    if path is not None:
        tree = json.loads(Path(path).read_text("utf-8"))
        unknown = set(tree) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(tree)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ValueError(f"unknown config override: {key}")
        merged[key] = value
    return ServiceConfig(**merged)
