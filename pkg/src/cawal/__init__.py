"""Unified server-side web analytics and application logging engine.

Per-request capture feeds an append-only log store and a shared live
session store; a nightly job rotates each day, extracts one analytics
record from it and loads monthly marts; an HTTP service exposes live
monitoring, admin actions and reports; a deterministic farm simulator
drives the whole pipeline for tests and benchmarks.
"""

from .capture import AppData, Capture, CaptureHandle, RequestContext
from .config import EngineConfig, load_config
from .enrich import Enricher
from .extract import AnalyticsDay, extract_day, run_nightly
from .log_store import LogStore
from .model import (
    BrowserType,
    LogoutType,
    OriginClass,
    PageviewRecord,
    RefType,
    SessionRecord,
    SessionState,
    Sex,
    UserProfile,
)
from .monitor import MonitorService, create_app
from .session_store import SessionPolicy, SessionStore
from .sessionize import RawEvent, SessionizerConfig, reconstruct_sessions
from .simulate import SimConfig, build_table3_day, run_benchmark, run_simulation
from .warehouse import Warehouse

__version__ = "0.1.0"

__all__ = [
    "AnalyticsDay",
    "AppData",
    "BrowserType",
    "Capture",
    "CaptureHandle",
    "EngineConfig",
    "Enricher",
    "LogStore",
    "LogoutType",
    "MonitorService",
    "OriginClass",
    "PageviewRecord",
    "RawEvent",
    "RefType",
    "RequestContext",
    "SessionPolicy",
    "SessionRecord",
    "SessionState",
    "SessionStore",
    "SessionizerConfig",
    "Sex",
    "SimConfig",
    "UserProfile",
    "Warehouse",
    "build_table3_day",
    "create_app",
    "extract_day",
    "load_config",
    "reconstruct_sessions",
    "run_benchmark",
    "run_nightly",
    "run_simulation",
    "__version__",
]
