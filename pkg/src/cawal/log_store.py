"""Time-partitioned append-only storage for session and pageview records.

Layout under the store root:

    live/YYYY-MM-DD.sessions.ndjson     append-only, one record per line
    live/YYYY-MM-DD.pageviews.ndjson
    staging/YYYY-MM-DD/sessions.ndjson  sealed at rotation, immutable
    staging/YYYY-MM-DD/pageviews.ndjson
    staging/YYYY-MM-DD/finals.ndjson    final session states (logout types)
    staging/YYYY-MM-DD/meta.json        counts + sealed flag (the only index)

A record's partition is the calendar date (engine timezone) of its session's
start, so pageviews of a session that runs past midnight stay with the
session's day. Appends flush per record; reopening after a crash recounts
lines, so every acknowledged append survives.
"""

from __future__ import annotations

import csv
import json
import shutil
import threading
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable, Iterator

from .model import (
    SESSION_COLUMNS,
    LogoutType,
    PageviewRecord,
    SessionRecord,
)

from zoneinfo import ZoneInfo


class LogStoreError(Exception):
    pass


class SealedPartitionError(LogStoreError):
    """Append raced a rotation; the caller re-resolves its partition."""


class UnknownSessionError(LogStoreError):
    """Pageview arrived for a session id the store has never seen."""


class PartitionNotFoundError(LogStoreError):
    pass


@dataclass(frozen=True)
class StagingPartition:
    """Handle to a sealed, immutable day of records."""

    date: date
    path: Path

    @property
    def sessions_path(self) -> Path:
        return self.path / "sessions.ndjson"

    @property
    def pageviews_path(self) -> Path:
        return self.path / "pageviews.ndjson"

    @property
    def finals_path(self) -> Path:
        return self.path / "finals.ndjson"

    def meta(self) -> dict:
        return json.loads((self.path / "meta.json").read_text(encoding="utf-8"))


def _dumps(row: dict) -> str:
    return json.dumps(row, separators=(",", ":"), ensure_ascii=True)


def _iter_ndjson(path: Path) -> Iterator[dict]:
    if not path.exists():
        return
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _count_lines(path: Path) -> int:
    if not path.exists():
        return 0
    with open(path, "rb") as fh:
        return sum(1 for line in fh if line.strip())


class LogStore:
    """Append-only OLTP log with daily rotation into staging partitions."""

    def __init__(
        self,
        root: str | Path,
        timezone_name: str = "UTC",
        clock: Callable[[], datetime] | None = None,
    ):
        self.root = Path(root)
        self.tz = ZoneInfo(timezone_name)
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self._lock = threading.RLock()
        self._handles: dict[tuple[date, str], object] = {}
        self._counts: dict[tuple[date, str], int] = {}
        self._session_dates: dict[str, date] = {}
        self._sealed: set[date] = set()
        (self.root / "live").mkdir(parents=True, exist_ok=True)
        (self.root / "staging").mkdir(parents=True, exist_ok=True)
        self._recover()

    def _recover(self) -> None:
        """Rebuild counters and the session-date index from disk."""
        for path in sorted((self.root / "staging").iterdir()):
            if path.is_dir():
                self._sealed.add(date.fromisoformat(path.name))
        for path in sorted((self.root / "live").glob("*.ndjson")):
            day_str, kind, _ = path.name.split(".", 2)
            day = date.fromisoformat(day_str)
            self._counts[(day, kind)] = _count_lines(path)
            if kind == "sessions":
                for row in _iter_ndjson(path):
                    self._session_dates[row["log_session_id"]] = day

    # -- appends -----------------------------------------------------------

    def _live_path(self, day: date, kind: str) -> Path:
        return self.root / "live" / f"{day.isoformat()}.{kind}.ndjson"

    def _append_line(self, day: date, kind: str, line: str) -> int:
        key = (day, kind)
        if day in self._sealed and not self._live_path(day, kind).exists():
            raise SealedPartitionError(day.isoformat())
        handle = self._handles.get(key)
        if handle is None:
            handle = open(self._live_path(day, kind), "a", encoding="utf-8")
            self._handles[key] = handle
        handle.write(line + "\n")
        handle.flush()
        self._counts[key] = self._counts.get(key, 0) + 1
        return self._counts[key]

    def partition_date(self, dt: datetime) -> date:
        return dt.astimezone(self.tz).date()

    def append_session(self, rec: SessionRecord) -> int:
        """Durable append; returns the record's sequence number in its
        partition. The partition is the record's own start date."""
        day = self.partition_date(rec.datetime)
        with self._lock:
            if day in self._sealed:
                raise SealedPartitionError(day.isoformat())
            seq = self._append_line(day, "sessions", _dumps(rec.to_row()))
            self._session_dates[rec.session_id] = day
            return seq

    def append_pageview(self, rec: PageviewRecord) -> int:
        """Append under the session's partition, not the pageview's own date."""
        with self._lock:
            day = self._session_dates.get(rec.session_id)
            if day is None:
                raise UnknownSessionError(rec.session_id)
            if day in self._sealed:
                raise SealedPartitionError(day.isoformat())
            return self._append_line(day, "pageviews", _dumps(rec.to_row()))

    def live_counts(self, day: date) -> tuple[int, int]:
        with self._lock:
            return (
                self._counts.get((day, "sessions"), 0),
                self._counts.get((day, "pageviews"), 0),
            )

    def live_dates(self) -> list[date]:
        with self._lock:
            return sorted({d for (d, _kind) in self._counts})

    # -- rotation ----------------------------------------------------------

    def rotate_day(
        self,
        day: date,
        logout_types: dict[str, LogoutType] | None = None,
    ) -> StagingPartition:
        """Seal a past day and move it to staging; idempotent.

        ``logout_types`` carries each session's final state from the session
        store; sessions missing from it were still open at rotation and are
        recorded as force-closed by timeout.
        """
        today = self.clock().astimezone(self.tz).date()
        if day >= today:
            raise LogStoreError(f"refusing to rotate current/future day {day}")
        staging_dir = self.root / "staging" / day.isoformat()
        with self._lock:
            if day in self._sealed and (staging_dir / "meta.json").exists():
                return StagingPartition(day, staging_dir)
            self._sealed.add(day)
            for kind in ("sessions", "pageviews"):
                handle = self._handles.pop((day, kind), None)
                if handle is not None:
                    handle.close()

            staging_dir.mkdir(parents=True, exist_ok=True)
            session_ids: list[str] = []
            for kind in ("sessions", "pageviews"):
                src = self._live_path(day, kind)
                dst = staging_dir / f"{kind}.ndjson"
                if src.exists():
                    shutil.move(str(src), str(dst))
                else:
                    dst.touch()
            for row in _iter_ndjson(staging_dir / "sessions.ndjson"):
                session_ids.append(row["log_session_id"])

            logout_types = logout_types or {}
            with open(staging_dir / "finals.ndjson", "w", encoding="utf-8") as fh:
                for sid in session_ids:
                    final = logout_types.get(sid, LogoutType.WINDOW_CLOSE_TIMEOUT)
                    fh.write(_dumps({"session_id": sid, "logout_type": int(final)}) + "\n")

            meta = {
                "date": day.isoformat(),
                "sessions": self._counts.pop((day, "sessions"), 0),
                "pageviews": self._counts.pop((day, "pageviews"), 0),
                "sealed": True,
            }
            (staging_dir / "meta.json").write_text(
                json.dumps(meta, indent=2) + "\n", encoding="utf-8"
            )
            for sid in session_ids:
                self._session_dates.pop(sid, None)
            return StagingPartition(day, staging_dir)

    def staging_partition(self, day: date) -> StagingPartition:
        path = self.root / "staging" / day.isoformat()
        if not (path / "meta.json").exists():
            raise PartitionNotFoundError(day.isoformat())
        return StagingPartition(day, path)

    def compact_live(self) -> int:
        """Drop empty live segment files; returns how many were removed."""
        removed = 0
        with self._lock:
            for path in list((self.root / "live").glob("*.ndjson")):
                if path.stat().st_size == 0:
                    day_str, kind, _ = path.name.split(".", 2)
                    key = (date.fromisoformat(day_str), kind)
                    handle = self._handles.pop(key, None)
                    if handle is not None:
                        handle.close()
                    path.unlink()
                    self._counts.pop(key, None)
                    removed += 1
        return removed

    # -- reads -------------------------------------------------------------

    def read_partition(
        self,
        handle: StagingPartition,
        service: str | None = None,
        server_id: int | None = None,
        user_class: str | None = None,
    ) -> tuple[list[SessionRecord], list[PageviewRecord], dict[str, LogoutType]]:
        """Stream a sealed partition back in append order, optionally
        filtered by service, server or user class (guest/authenticated)."""
        if not handle.path.exists():
            raise PartitionNotFoundError(handle.date.isoformat())

        def keep_session(rec: SessionRecord) -> bool:
            if service is not None and rec.service != service:
                return False
            if server_id is not None and rec.server_id != server_id:
                return False
            if user_class == "guest" and rec.user_id:
                return False
            if user_class == "authenticated" and not rec.user_id:
                return False
            return True

        def keep_pageview(rec: PageviewRecord) -> bool:
            if service is not None and rec.service != service:
                return False
            if server_id is not None and rec.server_id != server_id:
                return False
            if user_class is not None and rec.session_id not in wanted:
                return False
            return True

        sessions = [
            rec
            for rec in map(SessionRecord.from_row, _iter_ndjson(handle.sessions_path))
            if keep_session(rec)
        ]
        wanted = {rec.session_id for rec in sessions}
        filtered = service is not None or server_id is not None or user_class is not None
        pageviews = [
            rec
            for rec in map(PageviewRecord.from_row, _iter_ndjson(handle.pageviews_path))
            if keep_pageview(rec)
        ]
        finals = {
            row["session_id"]: LogoutType(row["logout_type"])
            for row in _iter_ndjson(handle.finals_path)
            if not filtered or row["session_id"] in wanted
        }
        return sessions, pageviews, finals

    def export_sessions_csv(self, handle: StagingPartition, out_path: str | Path) -> int:
        """Write a partition's session rows as CSV with the stored column
        names; returns the row count."""
        rows = 0
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=SESSION_COLUMNS)
            writer.writeheader()
            for row in _iter_ndjson(handle.sessions_path):
                writer.writerow(row)
                rows += 1
        return rows

    def close(self) -> None:
        with self._lock:
            for handle in self._handles.values():
                handle.close()
            self._handles.clear()
