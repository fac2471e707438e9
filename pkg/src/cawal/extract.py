"""Nightly batch extraction: one record per day summarizing all traffic.

Every float in the output is a single division of exactly accumulated
integers (millisecond and second totals), so re-running over the same
staging bytes reproduces the serialized record bit for bit.
"""

from __future__ import annotations

import json
import math
import os
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from datetime import date, datetime
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .config import EngineConfig
from .enrich import parse_cidrs, ip_in_cidrs
from .log_store import LogStore, PartitionNotFoundError, _iter_ndjson
from .model import (
    LogoutType,
    OriginClass,
    PageviewRecord,
    SessionRecord,
    Sex,
    UserProfile,
    iso,
)

SCHEMA_VERSION = 1

HOURS = 24
SEX_BUCKETS = 3
REF_TYPE_BUCKETS = 6
LOGOUT_BUCKETS = 4
TOP_HOSTS_LIMIT = 50


@dataclass
class AnalyticsDay:
    """Single-record daily rollup: scalar metrics plus six serialized
    aggregate tables."""

    date: str
    schema_version: int = SCHEMA_VERSION

    sessions_total: int = 0
    pageviews_total: int = 0
    unique_users: int = 0
    guest_sessions: int = 0
    authenticated_sessions: int = 0

    in_house_users: int = 0
    in_house_sessions: int = 0
    in_house_pageviews: int = 0
    in_country_users: int = 0
    in_country_sessions: int = 0
    in_country_pageviews: int = 0
    out_country_users: int = 0
    out_country_sessions: int = 0
    out_country_pageviews: int = 0

    pageviews_per_session: float = 0.0
    pageviews_per_user: float = 0.0
    sessions_per_user: float = 0.0

    total_gen_time_ms: int = 0
    avg_gen_time_ms: float = 0.0
    p50_gen_time_ms: int = 0
    p95_gen_time_ms: int = 0
    max_gen_time_ms: int = 0
    total_db_delay_ms: int = 0
    avg_db_delay_ms: float = 0.0
    p95_db_delay_ms: int = 0

    slow_page_count: int = 0
    error_count: int = 0
    unauthorized_attempt_count: int = 0

    peak_hour: int = 0
    peak_hour_pageviews: int = 0
    distinct_ips: int = 0
    multi_session_ip_count: int = 0

    bot_sessions: int = 0
    mobile_sessions: int = 0
    desktop_sessions: int = 0
    cookie_sessions: int = 0
    bounce_sessions: int = 0

    total_session_duration_s: int = 0
    avg_session_duration_s: float = 0.0

    servers_count: int = 0
    services_count: int = 0

    # the six serialized aggregates
    hourly_by_sex: list = field(
        default_factory=lambda: [[0] * SEX_BUCKETS for _ in range(HOURS)]
    )
    referrer_type_freq: list = field(
        default_factory=lambda: [0] * REF_TYPE_BUCKETS
    )
    top_ref_hosts: list = field(default_factory=list)
    landing_service_freq: list = field(default_factory=list)
    logout_type_freq: list = field(default_factory=lambda: [0] * LOGOUT_BUCKETS)
    per_server: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_row(cls, row: dict) -> "AnalyticsDay":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in row.items() if k in known})

    def to_json(self) -> str:
        return canonical_json(self.to_row())

    @classmethod
    def from_json(cls, text: str) -> "AnalyticsDay":
        return cls.from_row(json.loads(text))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def day_filename(day: date | str) -> str:
    day_str = day.isoformat() if isinstance(day, date) else day
    return f"analytics-{day_str}.json"


def visitor_identity(rec: SessionRecord) -> tuple:
    """Distinct-person key: user id when authenticated, else the stable
    device dimensions the record retains."""
    if rec.user_id:
        return ("u", rec.user_id)
    return ("g", rec.ip, rec.os_name, rec.browser_name, rec.browser_version)


def origin_of(rec: SessionRecord, home_country: str, cidrs) -> OriginClass:
    if ip_in_cidrs(rec.ip, cidrs):
        return OriginClass.IN_HOUSE
    if rec.country == home_country:
        return OriginClass.IN_COUNTRY
    return OriginClass.OUT_COUNTRY


def nearest_rank(sorted_values: list[int], q: float) -> int:
    """Percentile as an actual sample (nearest-rank), 0 for empty input."""
    if not sorted_values:
        return 0
    rank = math.ceil(q * len(sorted_values))
    return sorted_values[max(rank, 1) - 1]


def attribute_day(
    sessions: Iterable[SessionRecord], tz
) -> dict[str, date]:
    """Map each session to the calendar date it counts toward: the local
    date of its first request. Post-midnight pageviews follow the session."""
    return {
        rec.session_id: rec.datetime.astimezone(tz).date() for rec in sessions
    }


_extract_locks: dict[str, threading.Lock] = {}
_extract_locks_guard = threading.Lock()


def _lock_for(day: date) -> threading.Lock:
    with _extract_locks_guard:
        return _extract_locks.setdefault(day.isoformat(), threading.Lock())


def extract_day(
    store: LogStore,
    day: date,
    profiles: Mapping[int, UserProfile],
    config: EngineConfig,
) -> AnalyticsDay:
    """Compute the daily record from a sealed staging partition.

    Deterministic: identical staging bytes yield identical output. One
    extraction per date runs at a time.
    """
    with _lock_for(day):
        handle = store.staging_partition(day)
        sessions, pageviews, finals = store.read_partition(handle)
        return compute_day(day, sessions, pageviews, finals, profiles, config)


def compute_day(
    day: date,
    sessions: list[SessionRecord],
    pageviews: list[PageviewRecord],
    finals: Mapping[str, LogoutType],
    profiles: Mapping[int, UserProfile],
    config: EngineConfig,
) -> AnalyticsDay:
    out = AnalyticsDay(date=day.isoformat())
    tz = config.tzinfo
    cidrs = parse_cidrs(config.in_house_cidrs)

    out.sessions_total = len(sessions)
    out.pageviews_total = len(pageviews)

    users: set = set()
    class_users: dict[OriginClass, set] = defaultdict(set)
    ip_sessions: Counter = Counter()
    ref_hosts: Counter = Counter()
    service_freq: Counter = Counter()
    server_sessions: Counter = Counter()
    server_users: dict[int, set] = defaultdict(set)
    session_user: dict[str, int] = {}
    session_start: dict[str, datetime] = {}
    last_seen: dict[str, datetime] = {}
    pv_per_session: Counter = Counter()
    servers: set[int] = set()
    services: set[str] = set()

    for rec in sessions:
        ident = visitor_identity(rec)
        users.add(ident)
        origin = origin_of(rec, config.home_country, cidrs)
        class_users[origin].add(ident)
        if origin is OriginClass.IN_HOUSE:
            out.in_house_sessions += 1
        elif origin is OriginClass.IN_COUNTRY:
            out.in_country_sessions += 1
        else:
            out.out_country_sessions += 1
        if rec.user_id:
            out.authenticated_sessions += 1
        else:
            out.guest_sessions += 1
        ip_sessions[rec.ip] += 1
        if rec.ref_host:
            ref_hosts[rec.ref_host] += 1
        out.referrer_type_freq[int(rec.ref_type)] += 1
        final = finals.get(rec.session_id, LogoutType.WINDOW_CLOSE_TIMEOUT)
        out.logout_type_freq[int(final)] += 1
        service_freq[rec.service] += 1
        server_sessions[rec.server_id] += 1
        server_users[rec.server_id].add(ident)
        session_user[rec.session_id] = rec.user_id
        session_start[rec.session_id] = rec.datetime
        if rec.browser_type == 3:
            out.bot_sessions += 1
        elif rec.browser_type == 2:
            out.mobile_sessions += 1
        elif rec.browser_type == 1:
            out.desktop_sessions += 1
        if rec.cookie_check:
            out.cookie_sessions += 1
        servers.add(rec.server_id)
        services.add(rec.service)

    # per-origin pageview counts follow the owning session's class
    session_origin = {
        rec.session_id: origin_of(rec, config.home_country, cidrs)
        for rec in sessions
    }

    gen_times: list[int] = []
    db_delays: list[int] = []
    hour_totals = [0] * HOURS
    server_pageviews: Counter = Counter()
    for pv in pageviews:
        origin = session_origin.get(pv.session_id)
        if origin is OriginClass.IN_HOUSE:
            out.in_house_pageviews += 1
        elif origin is OriginClass.IN_COUNTRY:
            out.in_country_pageviews += 1
        elif origin is OriginClass.OUT_COUNTRY:
            out.out_country_pageviews += 1
        out.total_gen_time_ms += pv.gen_time_ms
        out.total_db_delay_ms += pv.db_delay_ms
        gen_times.append(pv.gen_time_ms)
        db_delays.append(pv.db_delay_ms)
        if pv.gen_time_ms > config.slow_page_threshold_ms:
            out.slow_page_count += 1
        if pv.error_code:
            out.error_count += 1
        if pv.error_code in (401, 403):
            out.unauthorized_attempt_count += 1
        local = pv.datetime.astimezone(tz)
        hour_totals[local.hour] += 1
        uid = session_user.get(pv.session_id, 0)
        profile = profiles.get(uid) if uid else None
        sex = int(profile.sex) if profile is not None else 0
        out.hourly_by_sex[local.hour][sex] += 1
        server_pageviews[pv.server_id] += 1
        pv_per_session[pv.session_id] += 1
        prev = last_seen.get(pv.session_id)
        if prev is None or pv.datetime > prev:
            last_seen[pv.session_id] = pv.datetime
        servers.add(pv.server_id)
        services.add(pv.service)

    out.unique_users = len(users)
    out.in_house_users = len(class_users[OriginClass.IN_HOUSE])
    out.in_country_users = len(class_users[OriginClass.IN_COUNTRY])
    out.out_country_users = len(class_users[OriginClass.OUT_COUNTRY])

    if out.sessions_total:
        out.pageviews_per_session = out.pageviews_total / out.sessions_total
    if out.unique_users:
        out.pageviews_per_user = out.pageviews_total / out.unique_users
        out.sessions_per_user = out.sessions_total / out.unique_users

    if out.pageviews_total:
        out.avg_gen_time_ms = out.total_gen_time_ms / out.pageviews_total
        out.avg_db_delay_ms = out.total_db_delay_ms / out.pageviews_total
        gen_times.sort()
        db_delays.sort()
        out.p50_gen_time_ms = nearest_rank(gen_times, 0.50)
        out.p95_gen_time_ms = nearest_rank(gen_times, 0.95)
        out.max_gen_time_ms = gen_times[-1]
        out.p95_db_delay_ms = nearest_rank(db_delays, 0.95)

    peak = max(hour_totals) if any(hour_totals) else 0
    out.peak_hour = hour_totals.index(peak) if peak else 0
    out.peak_hour_pageviews = peak

    out.distinct_ips = len(ip_sessions)
    out.multi_session_ip_count = sum(1 for n in ip_sessions.values() if n >= 2)
    out.bounce_sessions = sum(1 for n in pv_per_session.values() if n == 1)

    for sid, start in session_start.items():
        last = last_seen.get(sid, start)
        out.total_session_duration_s += int(
            round((last - start).total_seconds())
        )
    if out.sessions_total:
        out.avg_session_duration_s = (
            out.total_session_duration_s / out.sessions_total
        )

    out.servers_count = len(servers)
    out.services_count = len(services)

    out.top_ref_hosts = [
        [host, n]
        for host, n in sorted(ref_hosts.items(), key=lambda kv: (-kv[1], kv[0]))[
            :TOP_HOSTS_LIMIT
        ]
    ]
    out.landing_service_freq = [
        [svc, n]
        for svc, n in sorted(
            service_freq.items(), key=lambda kv: (-kv[1], kv[0])
        )
    ]
    out.per_server = {
        str(server_id): {
            "sessions": server_sessions.get(server_id, 0),
            "pageviews": server_pageviews.get(server_id, 0),
            "unique_users": len(server_users.get(server_id, set())),
        }
        for server_id in sorted(servers)
    }
    return out


def write_day_file(rec: AnalyticsDay, out_dir: str | Path) -> Path:
    """Atomically store the day record as canonical JSON; re-runs replace."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / day_filename(rec.date)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(rec.to_json() + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_day_file(path: str | Path) -> AnalyticsDay:
    return AnalyticsDay.from_json(Path(path).read_text(encoding="utf-8"))


def load_profiles(path: str | Path) -> dict[int, UserProfile]:
    """User profiles as NDJSON: one {user_id, username, sex} per line."""
    profiles: dict[int, UserProfile] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            profiles[row["user_id"]] = UserProfile(
                user_id=row["user_id"],
                username=row.get("username", ""),
                sex=Sex(row.get("sex", 0)),
            )
    return profiles


def write_profiles(profiles: Mapping[int, UserProfile], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for uid in sorted(profiles):
            p = profiles[uid]
            fh.write(
                canonical_json(
                    {"user_id": p.user_id, "username": p.username, "sex": int(p.sex)}
                )
                + "\n"
            )


class JobLog:
    """Plain-text progress log, one tab-separated line per event. Readable
    without any store running."""

    def __init__(self, path: str | Path, clock: Callable[[], datetime]):
        self.path = Path(path)
        self.clock = clock

    def event(self, stage: str, message: str) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = f"{iso(self.clock())}\t{stage}\t{message}\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)


def run_nightly(
    store: LogStore,
    day: date,
    profiles: Mapping[int, UserProfile],
    config: EngineConfig,
    *,
    logout_types: Mapping[str, LogoutType] | None = None,
    warehouse=None,
    job_log_path: str | Path | None = None,
    clock: Callable[[], datetime] | None = None,
    rerun: bool = False,
) -> dict:
    """Orchestrate rotate, attribute, extract and warehouse load.

    Each stage appends one timestamped line to the job log. A failed stage
    stops the run but leaves earlier outputs intact, so a rerun resumes.
    """
    clock = clock or store.clock
    log = JobLog(job_log_path or config.job_log_path, clock)
    report: dict = {"date": day.isoformat(), "ok": True, "stages": []}

    def stage(name: str, fn) -> bool:
        try:
            message = fn()
        except Exception as exc:
            log.event(name, f"failed: {exc}")
            report["stages"].append(
                {"stage": name, "ok": False, "message": str(exc)}
            )
            report["ok"] = False
            return False
        log.event(name, message)
        report["stages"].append({"stage": name, "ok": True, "message": message})
        return True

    def do_rotate() -> str:
        compacted = store.compact_live()
        handle = store.rotate_day(day, dict(logout_types or {}))
        meta = handle.meta()
        return (
            f"maintenance compacted {compacted} segments; sealed "
            f"{meta['sessions']} sessions, {meta['pageviews']} pageviews"
        )

    def do_attribute() -> str:
        handle = store.staging_partition(day)
        sessions = [
            SessionRecord.from_row(row)
            for row in _iter_ndjson(handle.sessions_path)
        ]
        mapping = attribute_day(sessions, config.tzinfo)
        stray = sorted(
            sid for sid, d in mapping.items() if d != day
        )
        if stray:
            raise PartitionNotFoundError(
                f"{len(stray)} sessions attributed outside {day}"
            )
        return f"attributed {len(mapping)} sessions to {day.isoformat()}"

    out_path = Path(config.analytics_dir) / day_filename(day)

    def do_extract() -> str:
        if out_path.exists() and not rerun:
            return f"{out_path.name} exists; kept (pass rerun to replace)"
        rec = extract_day(store, day, profiles, config)
        path = write_day_file(rec, config.analytics_dir)
        return f"wrote {path.name} ({path.stat().st_size} bytes)"

    def do_load() -> str:
        if warehouse is None:
            return "no warehouse configured; skipped"
        rec = read_day_file(out_path)
        warehouse.load_day(rec)
        return f"loaded {rec.date} into warehouse"

    for name, fn in (
        ("rotate", do_rotate),
        ("attribute", do_attribute),
        ("extract", do_extract),
        ("load", do_load),
    ):
        if not stage(name, fn):
            break
    return report
