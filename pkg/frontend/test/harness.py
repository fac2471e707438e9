"""Live backend for the dashboard integration test.

Builds a deterministic world in a temp directory (one simulated day,
extracted and loaded into a warehouse, plus a handful of live sessions),
serves the real monitor app on a free port, and prints one JSON line:

    {"port": ..., "token": ..., "expected": "<path to expected.json>"}

expected.json carries the ground truth the test asserts against: the
frozen census, a session id to kick, and the stored day record. The
process exits when stdin closes.
"""

from __future__ import annotations

import json
import socket
import sys
import tempfile
import threading
from datetime import date, datetime, timezone
from pathlib import Path

import uvicorn

from cawal.config import EngineConfig
from cawal.extract import extract_day, write_day_file
from cawal.monitor import MonitorService, create_app
from cawal.session_store import SessionStore
from cawal.simulate import SimConfig, run_simulation
from cawal.warehouse import Warehouse

TOKEN = "dashboard-test-token"
DAY = date(2019, 3, 5)


def build_world(root: Path) -> tuple[MonitorService, dict]:
    config = EngineConfig(
        log_root=str(root / "log_store"),
        analytics_dir=str(root / "analytics"),
        warehouse_dir=str(root / "warehouse"),
        admin_token=TOKEN,
    )

    sim = SimConfig(
        servers=(1, 2, 3),
        visitors=60,
        total_sessions=120,
        date=DAY.isoformat(),
        seed=42,
        mode="server_side",
    )
    result = run_simulation(sim, out_root=config.log_root)
    rec = extract_day(result.store, DAY, result.profiles, config)
    result.store.close()
    write_day_file(rec, config.analytics_dir)
    warehouse = Warehouse(config.warehouse_dir)
    warehouse.load_day(rec)

    # a small, known spread of live sessions; two share an IP
    store = SessionStore(token_source=iter(f"{n:032x}" for n in range(1, 100)).__next__)
    now = datetime.now(timezone.utc)
    live = [
        ("u:7", 7, "10.1.2.3", 1, "portal"),
        ("u:8", 8, "10.1.2.3", 2, "portal"),
        ("t:guest1", None, "198.51.100.4", 1, "lms"),
        ("t:guest2", None, "198.51.100.5", 3, "library"),
        ("u:9", 9, "203.0.113.9", 2, "portal"),
    ]
    sids = []
    for key, uid, ip, server_id, service in live:
        session, _ = store.open_or_join(key, uid, ip, server_id, service, now)
        sids.append(session.session_id)

    census = store.census(now)
    expected = {
        "census": {
            "per_server": {
                str(k): dict(v) for k, v in sorted(census.per_server.items())
            },
            "per_service": dict(census.per_service),
            "same_ip_groups": [list(g) for g in census.same_ip_groups],
            "totals": dict(census.totals),
        },
        "kick_sid": sids[0],
        "kick_server": "1",
        "day": DAY.isoformat(),
        "day_row": rec.to_row(),
    }
    return MonitorService(store, warehouse, config), expected


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def main() -> None:
    root = Path(tempfile.mkdtemp(prefix="cawal-dash-"))
    service, expected = build_world(root)
    expected_path = root / "expected.json"
    expected_path.write_text(json.dumps(expected), encoding="utf-8")

    port = free_port()
    server = uvicorn.Server(
        uvicorn.Config(
            create_app(service), host="127.0.0.1", port=port, log_level="warning"
        )
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        if not thread.is_alive():
            print(json.dumps({"error": "server failed to start"}), flush=True)
            sys.exit(1)
        threading.Event().wait(0.02)

    print(
        json.dumps(
            {"port": port, "token": TOKEN, "expected": str(expected_path)}
        ),
        flush=True,
    )

    sys.stdin.read()  # block until the test closes our stdin
    server.should_exit = True
    thread.join(timeout=5)


if __name__ == "__main__":
    main()
