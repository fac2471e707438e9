"""Shared live-session state for all servers of the farm.

One logically-shared store holds every in-flight session, keyed by session id
and indexed by visitor key, so a request landing on any server joins the same
session. All mutations take the store lock, which makes per-visitor operations
atomic and the whole store linearizable; a sweep may run concurrently with
traffic without ever producing an illegal state transition.

Every operation takes ``now`` explicitly; nothing here reads wall time.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .model import UTC, LogoutType, SessionState, iso, parse_iso


class SessionStoreError(Exception):
    """Base class for store failures."""


class BannedError(SessionStoreError):
    """Visitor matched an active ban flag; carries the flag."""

    def __init__(self, flag: "AdminFlag"):
        super().__init__(f"banned: {flag.kind.value}={flag.key}")
        self.flag = flag


class StaleSessionError(SessionStoreError):
    """Session id is unknown or already closed; caller opens a new session."""


class FlagKind(Enum):
    BAN_USER = "ban_user"
    BAN_IP = "ban_ip"


@dataclass(frozen=True)
class AdminFlag:
    kind: FlagKind
    key: str
    issued_at: datetime

    def to_row(self) -> dict:
        return {"kind": self.kind.value, "key": self.key, "issued_at": iso(self.issued_at)}

    @classmethod
    def from_row(cls, row: dict) -> "AdminFlag":
        return cls(FlagKind(row["kind"]), row["key"], parse_iso(row["issued_at"]))


@dataclass(frozen=True)
class SessionPolicy:
    """Inactivity thresholds: a warning fires after ``warn_after`` idle time
    and an unanswered warning closes the session ``grace`` later."""

    warn_after: timedelta = timedelta(minutes=25)
    grace: timedelta = timedelta(minutes=5)

    def __post_init__(self) -> None:
        if self.warn_after <= timedelta(0) or self.grace <= timedelta(0):
            raise ValueError("warn_after and grace must be positive")

    @property
    def timeout(self) -> timedelta:
        return self.warn_after + self.grace


@dataclass
class LiveSession:
    session_id: str
    visitor_key: str
    user_id: int | None
    ip: str
    server_id: int
    service: str
    started_at: datetime
    last_activity: datetime
    state: SessionState = SessionState.ACTIVE
    logout_type: LogoutType = LogoutType.NONE
    pageview_count: int = 0
    next_seq: int = 1

    def to_row(self) -> dict:
        return {
            "session_id": self.session_id,
            "visitor_key": self.visitor_key,
            "user_id": self.user_id,
            "ip": self.ip,
            "server_id": self.server_id,
            "service": self.service,
            "started_at": iso(self.started_at),
            "last_activity": iso(self.last_activity),
            "state": int(self.state),
            "logout_type": int(self.logout_type),
            "pageview_count": self.pageview_count,
            "next_seq": self.next_seq,
        }

    @classmethod
    def from_row(cls, row: dict) -> "LiveSession":
        return cls(
            session_id=row["session_id"],
            visitor_key=row["visitor_key"],
            user_id=row["user_id"],
            ip=row["ip"],
            server_id=row["server_id"],
            service=row["service"],
            started_at=parse_iso(row["started_at"]),
            last_activity=parse_iso(row["last_activity"]),
            state=SessionState(row["state"]),
            logout_type=LogoutType(row["logout_type"]),
            pageview_count=row["pageview_count"],
            next_seq=row.get("next_seq", row["pageview_count"] + 1),
        )


def _default_token_source() -> str:
    return secrets.token_hex(16)


@dataclass
class SessionCensus:
    """Point-in-time counts over active and warned sessions."""

    taken_at: datetime
    per_server: dict[int, dict[str, int]] = field(default_factory=dict)
    per_service: dict[str, int] = field(default_factory=dict)
    same_ip_groups: list[tuple[str, int]] = field(default_factory=list)
    totals: dict[str, int] = field(default_factory=dict)


class SessionStore:
    """In-process shared session store with atomic per-key operations.

    ``token_source`` generates fresh 32-hex session ids; simulations inject a
    seeded source for reproducible runs.
    """

    def __init__(
        self,
        policy: SessionPolicy | None = None,
        token_source: Callable[[], str] = _default_token_source,
    ):
        self.policy = policy or SessionPolicy()
        self._token_source = token_source
        self._lock = threading.RLock()
        self._sessions: dict[str, LiveSession] = {}
        self._by_visitor: dict[str, str] = {}
        self._flags: dict[tuple[FlagKind, str], AdminFlag] = {}

    # -- lifecycle ---------------------------------------------------------

    def open_or_join(
        self,
        visitor_key: str,
        user_id: int | None,
        ip: str,
        server_id: int,
        service: str,
        now: datetime,
    ) -> tuple[LiveSession, bool]:
        """Return the visitor's live session, creating one when needed.

        Returns ``(session, created)``. Joining is independent of which
        server handles the request; two visitor keys sharing one IP always
        map to two sessions. Raises :class:`BannedError` when an active flag
        matches the user id or the IP.
        """
        with self._lock:
            flag = self._match_flag(user_id, ip)
            if flag is not None:
                raise BannedError(flag)

            sid = self._by_visitor.get(visitor_key)
            if sid is not None:
                session = self._sessions.get(sid)
                if session is not None and session.state != SessionState.CLOSED:
                    return session, False

            session = LiveSession(
                session_id=self._token_source(),
                visitor_key=visitor_key,
                user_id=user_id,
                ip=ip,
                server_id=server_id,
                service=service,
                started_at=now,
                last_activity=now,
            )
            self._sessions[session.session_id] = session
            self._by_visitor[visitor_key] = session.session_id
            return session, True

    def touch(self, session_id: str, now: datetime) -> SessionState:
        """Record activity; a warned session returns to active (the user's
        "continue" signal). Closed or unknown sessions raise stale."""
        with self._lock:
            session = self._require_open(session_id)
            session.last_activity = now
            if session.state == SessionState.WARNED:
                session.state = SessionState.ACTIVE
            return session.state

    def sweep(self, now: datetime) -> tuple[list[LiveSession], list[LiveSession]]:
        """Apply inactivity transitions: active sessions idle >= warn_after
        become warned; warned sessions idle >= warn_after + grace close with
        the window-close logout type. Returns (newly warned, newly closed)."""
        warned: list[LiveSession] = []
        closed: list[LiveSession] = []
        with self._lock:
            for session in self._sessions.values():
                if session.state == SessionState.ACTIVE:
                    if now - session.last_activity >= self.policy.warn_after:
                        session.state = SessionState.WARNED
                        warned.append(session)
                if session.state == SessionState.WARNED:
                    if now - session.last_activity >= self.policy.timeout:
                        session.state = SessionState.CLOSED
                        session.logout_type = LogoutType.WINDOW_CLOSE_TIMEOUT
                        closed.append(session)
        return warned, closed

    def close(
        self, session_id: str, logout_type: LogoutType, now: datetime
    ) -> LiveSession:
        """Close an active or warned session; closing twice is a no-op that
        returns the already-closed record."""
        if logout_type not in (LogoutType.EXPLICIT, LogoutType.KICKED):
            raise ValueError(f"close() does not accept logout_type={logout_type!r}")
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise StaleSessionError(session_id)
            if session.state == SessionState.CLOSED:
                return session
            session.state = SessionState.CLOSED
            session.logout_type = logout_type
            session.last_activity = now
            return session

    def get(self, session_id: str) -> LiveSession | None:
        with self._lock:
            return self._sessions.get(session_id)

    def allocate_seq(self, session_id: str) -> int:
        with self._lock:
            session = self._require_open(session_id)
            seq = session.next_seq
            session.next_seq += 1
            return seq

    def record_pageview(self, session_id: str) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise StaleSessionError(session_id)
            session.pageview_count += 1

    # -- admin flags -------------------------------------------------------

    def set_flag(self, flag: AdminFlag) -> bool:
        """Upsert a ban flag; returns True when it was newly created."""
        with self._lock:
            key = (flag.kind, flag.key)
            created = key not in self._flags
            self._flags[key] = flag
            return created

    def clear_flag(self, kind: FlagKind, key: str) -> bool:
        with self._lock:
            return self._flags.pop((kind, key), None) is not None

    def get_flag(self, kind: FlagKind, key: str) -> AdminFlag | None:
        with self._lock:
            return self._flags.get((kind, key))

    def flags(self) -> list[AdminFlag]:
        with self._lock:
            return list(self._flags.values())

    def kick(self, session_id: str, now: datetime) -> LiveSession:
        """Admin-close a session; kicking an already-closed one is stale."""
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None or session.state == SessionState.CLOSED:
                raise StaleSessionError(session_id)
            return self.close(session_id, LogoutType.KICKED, now)

    def _match_flag(self, user_id: int | None, ip: str) -> AdminFlag | None:
        if user_id is not None:
            flag = self._flags.get((FlagKind.BAN_USER, str(user_id)))
            if flag is not None:
                return flag
        return self._flags.get((FlagKind.BAN_IP, ip))

    def _require_open(self, session_id: str) -> LiveSession:
        session = self._sessions.get(session_id)
        if session is None or session.state == SessionState.CLOSED:
            raise StaleSessionError(session_id)
        return session

    # -- census / harvest --------------------------------------------------

    def sessions(self) -> list[LiveSession]:
        with self._lock:
            return list(self._sessions.values())

    def census(self, now: datetime) -> SessionCensus:
        """Consistent snapshot of active+warned sessions for monitoring."""
        with self._lock:
            live = [
                s
                for s in self._sessions.values()
                if s.state != SessionState.CLOSED
            ]
            per_server: dict[int, dict[str, int]] = {}
            per_service: dict[str, int] = {}
            by_ip: dict[str, int] = {}
            guests = 0
            authenticated = 0
            for s in live:
                bucket = per_server.setdefault(
                    s.server_id,
                    {"active_sessions": 0, "guests": 0, "authenticated": 0},
                )
                bucket["active_sessions"] += 1
                if s.user_id:
                    bucket["authenticated"] += 1
                    authenticated += 1
                else:
                    bucket["guests"] += 1
                    guests += 1
                per_service[s.service] = per_service.get(s.service, 0) + 1
                by_ip[s.ip] = by_ip.get(s.ip, 0) + 1
            same_ip = sorted(
                ((ip, n) for ip, n in by_ip.items() if n >= 2),
                key=lambda t: (-t[1], t[0]),
            )
            return SessionCensus(
                taken_at=now,
                per_server=per_server,
                per_service=dict(sorted(per_service.items())),
                same_ip_groups=same_ip,
                totals={
                    "active_sessions": len(live),
                    "guests": guests,
                    "authenticated": authenticated,
                },
            )

    def harvest_closed(
        self, keep: Callable[[LiveSession], bool] | None = None
    ) -> list[LiveSession]:
        """Remove and return closed sessions (optionally filtered), e.g. at
        daily rotation after extraction inputs are final."""
        with self._lock:
            taken = []
            for sid in list(self._sessions):
                session = self._sessions[sid]
                if session.state != SessionState.CLOSED:
                    continue
                if keep is not None and not keep(session):
                    continue
                taken.append(self._sessions.pop(sid))
                if self._by_visitor.get(session.visitor_key) == sid:
                    del self._by_visitor[session.visitor_key]
            return taken

    # -- persistence -------------------------------------------------------

    def save_snapshot(self, sessions_path: Path, flags_path: Path | None = None) -> None:
        """NDJSON snapshot: one LiveSession per line; flags file likewise."""
        with self._lock:
            sessions = [s.to_row() for s in self._sessions.values()]
            flags = [f.to_row() for f in self._flags.values()]
        with open(sessions_path, "w", encoding="utf-8") as fh:
            for row in sessions:
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
        if flags_path is not None:
            with open(flags_path, "w", encoding="utf-8") as fh:
                for row in flags:
                    fh.write(json.dumps(row, separators=(",", ":")) + "\n")

    def load_snapshot(self, sessions_path: Path, flags_path: Path | None = None) -> None:
        with self._lock:
            self._sessions.clear()
            self._by_visitor.clear()
            for line in _ndjson_lines(sessions_path):
                session = LiveSession.from_row(line)
                self._sessions[session.session_id] = session
                if session.state != SessionState.CLOSED:
                    self._by_visitor[session.visitor_key] = session.session_id
            if flags_path is not None and flags_path.exists():
                self._flags.clear()
                for line in _ndjson_lines(flags_path):
                    flag = AdminFlag.from_row(line)
                    self._flags[(flag.kind, flag.key)] = flag


def _ndjson_lines(path: Path) -> Iterable[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
