from __future__ import annotations

from datetime import datetime, timezone

import pytest
from hypothesis import settings

from cawal.config import EngineConfig
from cawal.log_store import LogStore
from cawal.simulate import SimConfig, run_simulation

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

# after every simulated day; lets test stores rotate any 2018/2019 date
FROZEN_NOW = datetime(2019, 6, 1, 12, 0, tzinfo=timezone.utc)


@pytest.fixture
def frozen_clock():
    return lambda: FROZEN_NOW


@pytest.fixture
def store(tmp_path, frozen_clock) -> LogStore:
    return LogStore(tmp_path / "log_store", "UTC", clock=frozen_clock)


@pytest.fixture
def econfig(tmp_path) -> EngineConfig:
    return EngineConfig(
        log_root=str(tmp_path / "log_store"),
        analytics_dir=str(tmp_path / "analytics"),
        warehouse_dir=str(tmp_path / "warehouse"),
        job_log_path=str(tmp_path / "extractor.log"),
        session_snapshot_path=str(tmp_path / "sessions.ndjson"),
        flags_snapshot_path=str(tmp_path / "flags.ndjson"),
    )


@pytest.fixture(scope="session")
def small_sim(tmp_path_factory):
    """One modest simulated day through the full capture path, shared by the
    extraction, warehouse and monitor tests."""
    out_root = tmp_path_factory.mktemp("small_sim")
    cfg = SimConfig(
        servers=(1, 2, 3),
        lb_policy="round_robin",
        visitors=120,
        total_sessions=250,
        date="2019-03-05",
        seed=42,
    )
    return run_simulation(cfg, out_root=out_root)


# -- acceptance verdicts -----------------------------------------------------

_VERDICTS: list[str] = []


def record_verdict(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{criterion}] {'PASS' if ok else 'FAIL'} - {detail}"
    _VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance")
    for line in _VERDICTS:
        terminalreporter.write_line(line)
