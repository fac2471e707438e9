"""Offline grouping of raw request events into sessions.

Identity resolution prefers the first-party token, then the authenticated
user id, then a hash of ip+ua. Grouping sorts events by (visitor, time) and
splits on idle gaps above the timeout or on a mid-stream user change, which
keeps the whole pass at O(n log n).

Known complications deliberately not handled here: browser-fingerprint
disambiguation, cookie-deletion recovery and multi-device merging. They
would need signals this event format does not carry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable

from .enrich import visitor_hash


@dataclass(frozen=True)
class RawEvent:
    """One imported request event; input order is preserved as a tiebreak."""

    timestamp: datetime
    ip: str
    ua: str = ""
    url: str = ""
    referrer: str = ""
    token: str | None = None
    user_id: int | None = None

    def to_row(self) -> dict:
        return {
            "timestamp": self.timestamp.astimezone(timezone.utc).isoformat(),
            "ip": self.ip,
            "ua": self.ua,
            "url": self.url,
            "referrer": self.referrer,
            "token": self.token,
            "user_id": self.user_id,
        }

    @classmethod
    def from_row(cls, row: dict) -> "RawEvent":
        ts = datetime.fromisoformat(row["timestamp"])
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        return cls(
            timestamp=ts,
            ip=row.get("ip", ""),
            ua=row.get("ua", ""),
            url=row.get("url", ""),
            referrer=row.get("referrer", ""),
            token=row.get("token"),
            user_id=row.get("user_id"),
        )


@dataclass(frozen=True)
class SessionizerConfig:
    timeout: timedelta = timedelta(minutes=30)

    def __post_init__(self) -> None:
        if self.timeout <= timedelta(0):
            raise ValueError("timeout must be positive")


@dataclass
class ReconstructedSession:
    visitor_key: str
    start: datetime
    end: datetime
    event_indices: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.event_indices)


def resolve_visitor(event: RawEvent) -> str:
    """f: map an event to a visitor key — token, else user id, else ip+ua."""
    if event.token:
        return f"t:{event.token}"
    if event.user_id is not None:
        return f"u:{event.user_id}"
    return f"h:{visitor_hash(event.ip, event.ua)}"


def reconstruct_sessions(
    events: list[RawEvent], cfg: SessionizerConfig | None = None
) -> list[ReconstructedSession]:
    """g: collate events into sessions per visitor.

    A new session starts at a visitor's first event and whenever the gap to
    the previous event exceeds the timeout or the authenticated user changes
    mid-stream. Equal timestamps keep input order. Every event lands in
    exactly one session; output is sorted by (visitor_key, start).
    """
    cfg = cfg or SessionizerConfig()
    order = sorted(
        range(len(events)),
        key=lambda i: (resolve_visitor(events[i]), events[i].timestamp, i),
    )
    sessions: list[ReconstructedSession] = []
    current: ReconstructedSession | None = None
    current_user: int | None = None
    for i in order:
        event = events[i]
        key = resolve_visitor(event)
        split = (
            current is None
            or current.visitor_key != key
            or event.timestamp - events[current.event_indices[-1]].timestamp
            > cfg.timeout
            or (
                current_user is not None
                and event.user_id is not None
                and event.user_id != current_user
            )
        )
        if split:
            current = ReconstructedSession(
                visitor_key=key, start=event.timestamp, end=event.timestamp
            )
            sessions.append(current)
            current_user = event.user_id
        current.event_indices.append(i)
        current.end = event.timestamp
        if event.user_id is not None:
            current_user = event.user_id
    return sessions


# Combined log format: host ident authuser [date] "request" status bytes
# "referer" "user-agent"
_CLF_RE = re.compile(
    r'^(?P<ip>\S+) (?P<ident>\S+) (?P<user>\S+) \[(?P<time>[^\]]+)\] '
    r'"(?P<request>[^"]*)" (?P<status>\d{3}) (?P<size>\S+)'
    r'(?: "(?P<referrer>[^"]*)" "(?P<ua>[^"]*)")?'
)

_CLF_TIME = "%d/%b/%Y:%H:%M:%S %z"


def parse_combined_log_line(line: str) -> RawEvent | None:
    """Best-effort adapter from a combined-log-format line; fields that do
    not map stay empty. Returns None for unparseable lines."""
    m = _CLF_RE.match(line.strip())
    if m is None:
        return None
    try:
        ts = datetime.strptime(m.group("time"), _CLF_TIME)
    except ValueError:
        return None
    request = m.group("request") or ""
    parts = request.split(" ")
    url = parts[1] if len(parts) >= 2 else ""
    referrer = m.group("referrer") or ""
    if referrer == "-":
        referrer = ""
    user = m.group("user")
    user_id = int(user) if user.isdigit() else None
    return RawEvent(
        timestamp=ts,
        ip=m.group("ip"),
        ua=m.group("ua") or "",
        url=url,
        referrer=referrer,
        user_id=user_id,
    )


def parse_combined_log(lines: Iterable[str]) -> list[RawEvent]:
    events = []
    for line in lines:
        event = parse_combined_log_line(line)
        if event is not None:
            events.append(event)
    return events
