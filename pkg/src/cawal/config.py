"""Engine configuration: one JSON file, environment overrides, sane defaults.

``CAWAL_*`` environment variables override individual settings for the
monitor service (listen address, admin token, store paths).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from zoneinfo import ZoneInfo


@dataclass(frozen=True)
class EngineConfig:
    # identity of the deployment
    own_domains: tuple[str, ...] = ("example.edu",)
    main_hosts: tuple[str, ...] = ("www.example.edu", "example.edu")
    home_country: str = "TR"
    in_house_cidrs: tuple[str, ...] = ("10.0.0.0/8",)
    timezone: str = "UTC"

    # data table paths; None means the bundled defaults
    geoip_path: str | None = None
    bots_path: str | None = None
    search_engines_path: str | None = None
    social_hosts_path: str | None = None

    # storage layout
    log_root: str = "var/log_store"
    analytics_dir: str = "var/analytics"
    warehouse_dir: str = "var/warehouse"
    profiles_path: str | None = None
    job_log_path: str = "var/extractor.log"
    session_snapshot_path: str = "var/sessions.ndjson"
    flags_snapshot_path: str = "var/flags.ndjson"

    # capture behavior
    mask_keys: tuple[str, ...] = ("password", "passwd", "token", "secret", "authorization")
    snapshot_value_limit: int = 255

    # session policy (minutes)
    warn_after_min: float = 25.0
    grace_min: float = 5.0

    # extraction thresholds
    slow_page_threshold_ms: int = 1000

    # monitor service
    listen: str = "127.0.0.1:8787"
    admin_token: str = "change-me"

    @property
    def tzinfo(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)


_ENV_OVERRIDES = {
    "CAWAL_LISTEN": "listen",
    "CAWAL_ADMIN_TOKEN": "admin_token",
    "CAWAL_LOG_ROOT": "log_root",
    "CAWAL_ANALYTICS_DIR": "analytics_dir",
    "CAWAL_WAREHOUSE_DIR": "warehouse_dir",
    "CAWAL_SESSION_SNAPSHOT": "session_snapshot_path",
    "CAWAL_TIMEZONE": "timezone",
}

_TUPLE_FIELDS = {"own_domains", "main_hosts", "in_house_cidrs", "mask_keys"}


def load_config(path: str | Path | None = None, env: dict | None = None) -> EngineConfig:
    """Build the config from defaults, then the JSON file, then CAWAL_* env."""
    values: dict = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(EngineConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    env = os.environ if env is None else env
    for var, key in _ENV_OVERRIDES.items():
        if var in env:
            values[key] = env[var]
    for key in _TUPLE_FIELDS & set(values):
        values[key] = tuple(values[key])
    return replace(EngineConfig(), **values)
