"""Command-line entry points for the engine's operational surfaces."""

from __future__ import annotations

import csv
import io
import json
import sys
from datetime import date, datetime, timezone
from pathlib import Path

import click

from .config import EngineConfig, load_config
from .extract import (
    canonical_json,
    load_profiles,
    run_nightly,
    write_profiles,
)
from .log_store import LogStore
from .model import LogoutType, SessionState
from .monitor import MonitorService, create_app
from .sessionize import (
    RawEvent,
    SessionizerConfig,
    parse_combined_log,
    reconstruct_sessions,
)
from .session_store import SessionStore
from .simulate import (
    MODES,
    SimConfig,
    build_table3_day,
    run_benchmark,
    run_simulation,
)
from .warehouse import Warehouse, WarehouseError


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def _open_store(config: EngineConfig) -> LogStore:
    return LogStore(config.log_root, config.timezone, clock=_utcnow)


def _closed_session_types(config: EngineConfig) -> dict[str, LogoutType]:
    """Final logout types from the session-store snapshot, if one exists."""
    path = Path(config.session_snapshot_path)
    if not path.exists():
        return {}
    store = SessionStore()
    store.load_snapshot(path)
    return {
        s.session_id: s.logout_type
        for s in store.sessions()
        if s.state == SessionState.CLOSED
    }


@click.group()
def main() -> None:
    """Server-side web analytics and application logging engine."""


@main.command()
@click.option("--date", "date_str", required=True, help="Day to process, YYYY-MM-DD.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--rerun", is_flag=True, help="Replace an existing analytics file.")
def extract(date_str: str, config_path: str | None, rerun: bool) -> None:
    """Run the nightly job: rotate, attribute, extract, load."""
    config = load_config(config_path)
    day = date.fromisoformat(date_str)
    store = _open_store(config)
    profiles = (
        load_profiles(config.profiles_path)
        if config.profiles_path and Path(config.profiles_path).exists()
        else {}
    )
    warehouse = Warehouse(config.warehouse_dir)
    try:
        report = run_nightly(
            store,
            day,
            profiles,
            config,
            logout_types=_closed_session_types(config),
            warehouse=warehouse,
            rerun=rerun,
        )
    finally:
        store.close()
    for stage in report["stages"]:
        status = "ok" if stage["ok"] else "FAILED"
        click.echo(f"{stage['stage']}: {status} - {stage['message']}")
    if not report["ok"]:
        raise SystemExit(1)


@main.group()
def etl() -> None:
    """Warehouse loading and range queries."""


@etl.command("load")
@click.option("--file", "file_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--force", is_flag=True, help="Backfill into a sealed month.")
def etl_load(file_path: str, config_path: str | None, force: bool) -> None:
    """Load one analytics-YYYY-MM-DD.json file into its monthly mart."""
    config = load_config(config_path)
    warehouse = Warehouse(config.warehouse_dir)
    try:
        mart_path = warehouse.load_file(file_path, force=force)
    except WarehouseError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"loaded into {mart_path}")


def _series_csv(result: dict) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    if result["group_by"] is None:
        writer.writerow(["date", "value"])
        for point in result["series"]:
            value = point["value"]
            writer.writerow([point["date"], "" if value is None else value])
        if result["total"] is not None:
            writer.writerow(["total", result["total"]])
    else:
        groups = sorted(result["totals"])
        writer.writerow(["date"] + groups)
        for point in result["series"]:
            values = point["values"]
            if values is None:
                writer.writerow([point["date"]] + [""] * len(groups))
            else:
                writer.writerow(
                    [point["date"]] + [values.get(g, "") for g in groups]
                )
        writer.writerow(["total"] + [result["totals"][g] for g in groups])
    return out.getvalue()


@etl.command("query")
@click.option("--metric", required=True)
@click.option("--from", "from_str", required=True, help="Start date, YYYY-MM-DD.")
@click.option("--to", "to_str", required=True, help="End date, YYYY-MM-DD.")
@click.option("--group-by", "group_by", default=None,
              type=click.Choice(["server", "origin", "referrer_type"]))
@click.option("--out", "out_format", default="json",
              type=click.Choice(["csv", "json"]))
@click.option("--config", "config_path", type=click.Path(), default=None)
def etl_query(
    metric: str,
    from_str: str,
    to_str: str,
    group_by: str | None,
    out_format: str,
    config_path: str | None,
) -> None:
    """Query a metric over a date range."""
    config = load_config(config_path)
    warehouse = Warehouse(config.warehouse_dir)
    try:
        result = warehouse.query_range(
            metric, date.fromisoformat(from_str), date.fromisoformat(to_str),
            group_by,
        )
    except (WarehouseError, ValueError) as exc:
        raise click.ClickException(str(exc))
    if out_format == "json":
        click.echo(canonical_json(result))
    else:
        sys.stdout.write(_series_csv(result))


@main.command()
@click.option("--config", "sim_config_path", required=True,
              type=click.Path(exists=True), help="SimConfig JSON file.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--workdir", type=click.Path(), default=None,
              help="Log-store root for server_side mode (default: <out>.store).")
def simulate(sim_config_path: str, out_path: str, workdir: str | None) -> None:
    """Run a deterministic web-farm simulation and write its report."""
    raw = json.loads(Path(sim_config_path).read_text(encoding="utf-8"))
    cfg = SimConfig.from_dict(raw)
    out_root = workdir or f"{out_path}.store"
    result = run_simulation(
        cfg, out_root=out_root if cfg.mode == "server_side" else None
    )
    Path(out_path).write_text(
        canonical_json(result.report) + "\n", encoding="utf-8"
    )
    totals = result.report["totals"]
    click.echo(
        f"{totals['sessions']} sessions, {totals['pageviews']} pageviews "
        f"-> {out_path}"
    )
    if result.staging is not None:
        click.echo(f"staged day at {result.staging.path}")


@main.command()
@click.option("--modes", default="none,server_side,client_emulation",
              help="Comma-separated tracking modes to compare.")
@click.option("--seed", default=1, type=int)
@click.option("--pageviews", default=2000, type=int)
@click.option("--repeats", default=1, type=int,
              help="Passes per mode; the fastest one is reported.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def bench(
    modes: str, seed: int, pageviews: int, repeats: int, out_path: str | None
) -> None:
    """Benchmark tracking modes under identical offered load."""
    wanted = tuple(m.strip() for m in modes.split(",") if m.strip())
    for mode in wanted:
        if mode not in MODES:
            raise click.ClickException(
                f"unknown mode {mode!r}; choose from {', '.join(MODES)}"
            )
    cfg = SimConfig(seed=seed)
    report = run_benchmark(cfg, modes=wanted, pageviews=pageviews,
                           repeats=repeats)
    body = canonical_json(report)
    if out_path:
        Path(out_path).write_text(body + "\n", encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(body)


@main.command("make-table3-day")
@click.option("--out", "out_root", required=True, type=click.Path(),
              help="Log-store root to build and seal the reference day in.")
@click.option("--seed", default=20180411, type=int)
def make_table3_day(out_root: str, seed: int) -> None:
    """Build the synthetic reference day used by the acceptance suite."""
    built = build_table3_day(out_root, seed=seed)
    meta = built.staging.meta()
    write_profiles(built.profiles, Path(out_root) / "profiles.ndjson")
    built.store.close()
    click.echo(
        f"staged {meta['sessions']} sessions, {meta['pageviews']} pageviews "
        f"at {built.staging.path}"
    )
    click.echo(f"profiles at {Path(out_root) / 'profiles.ndjson'}")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
def serve(config_path: str | None) -> None:
    """Run the monitoring and reporting HTTP service."""
    import uvicorn

    config = load_config(config_path)
    store = SessionStore()
    snapshot = Path(config.session_snapshot_path)
    if snapshot.exists():
        flags = Path(config.flags_snapshot_path)
        store.load_snapshot(snapshot, flags if flags.exists() else None)
    warehouse = Warehouse(config.warehouse_dir)
    service = MonitorService(store, warehouse, config)
    app = create_app(service)
    host, _, port = config.listen.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787))


@main.command()
@click.option("--events", "events_path", type=click.Path(exists=True),
              default=None, help="NDJSON RawEvent lines.")
@click.option("--clf", "clf_path", type=click.Path(exists=True), default=None,
              help="Combined-log-format access log.")
@click.option("--timeout-min", default=30.0, type=float)
@click.option("--out", "out_path", type=click.Path(), default=None)
def sessionize(
    events_path: str | None,
    clf_path: str | None,
    timeout_min: float,
    out_path: str | None,
) -> None:
    """Group raw request events into sessions offline."""
    from datetime import timedelta

    if (events_path is None) == (clf_path is None):
        raise click.ClickException("pass exactly one of --events or --clf")
    if events_path is not None:
        events = []
        with open(events_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(RawEvent.from_row(json.loads(line)))
    else:
        with open(clf_path, "r", encoding="utf-8") as fh:
            events = parse_combined_log(fh)
    cfg = SessionizerConfig(timeout=timedelta(minutes=timeout_min))
    sessions = reconstruct_sessions(events, cfg)
    rows = [
        {
            "visitor_key": s.visitor_key,
            "start": s.start.isoformat(),
            "end": s.end.isoformat(),
            "events": s.count,
        }
        for s in sessions
    ]
    body = canonical_json({"events": len(events), "sessions": rows})
    if out_path:
        Path(out_path).write_text(body + "\n", encoding="utf-8")
        click.echo(f"{len(events)} events -> {len(sessions)} sessions -> {out_path}")
    else:
        click.echo(body)


if __name__ == "__main__":
    main()
