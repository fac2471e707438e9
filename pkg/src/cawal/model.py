"""Domain types shared across the engine.

Enum codes are wire-stable: they appear in NDJSON segments, CSV exports and
serialized daily analytics, so renumbering them invalidates stored data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from enum import IntEnum

UTC = timezone.utc

MAX_TEXT_BYTES = 255


class BrowserType(IntEnum):
    UNKNOWN = 0
    DESKTOP = 1
    MOBILE = 2
    BOT = 3


class RefType(IntEnum):
    DIRECT = 0
    MAIN_SITE = 1
    SUBDOMAIN = 2
    EXTERNAL = 3
    SEARCH_ENGINE = 4
    SOCIAL = 5


class OriginClass(IntEnum):
    """Origin of an incoming IP relative to the organization."""

    IN_HOUSE = 0
    IN_COUNTRY = 1
    OUT_COUNTRY = 2

    @property
    def label(self) -> str:
        return _ORIGIN_LABELS[self]


_ORIGIN_LABELS = {
    OriginClass.IN_HOUSE: "in_house",
    OriginClass.IN_COUNTRY: "in_country",
    OriginClass.OUT_COUNTRY: "out_country",
}

ORIGIN_LABELS = tuple(_ORIGIN_LABELS[c] for c in OriginClass)


class Sex(IntEnum):
    NA = 0
    MALE = 1
    FEMALE = 2


class SessionState(IntEnum):
    ACTIVE = 0
    WARNED = 1
    CLOSED = 2


class LogoutType(IntEnum):
    NONE = 0
    EXPLICIT = 1
    WINDOW_CLOSE_TIMEOUT = 2
    KICKED = 3


def truncate_text(value: str, limit: int = MAX_TEXT_BYTES) -> str:
    """Cap a free-text dimension at ``limit`` UTF-8 bytes."""
    raw = value.encode("utf-8")
    if len(raw) <= limit:
        return value
    return raw[:limit].decode("utf-8", errors="ignore")


def iso(dt: datetime) -> str:
    return dt.astimezone(UTC).isoformat()


def parse_iso(text: str) -> datetime:
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    return dt


@dataclass(frozen=True)
class UserAgentInfo:
    """Parsed user-agent dimensions (OS, browser, type)."""

    os_name: str = ""
    os_version: str = ""
    browser_name: str = ""
    browser_version: str = ""
    browser_type: BrowserType = BrowserType.UNKNOWN


@dataclass(frozen=True)
class ReferrerInfo:
    """Six-way referrer classification with optional decoded search keywords."""

    ref_type: RefType = RefType.DIRECT
    ref_host: str = ""
    search_key: str = ""


@dataclass(frozen=True)
class GeoEntry:
    """One inclusive IPv4 range mapped to an ISO-3166 alpha-2 country."""

    ip_range_start: int
    ip_range_end: int
    country: str

    def __post_init__(self) -> None:
        if self.ip_range_start > self.ip_range_end:
            raise ValueError(
                f"range start {self.ip_range_start} > end {self.ip_range_end}"
            )


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    username: str = ""
    sex: Sex = Sex.NA


# Column names used by NDJSON session rows and the CSV export.
SESSION_COLUMNS = (
    "log_id",
    "log_opn_id",
    "log_datetime",
    "log_uid",
    "log_username",
    "log_ip",
    "log_proxy",
    "log_os_name",
    "log_os_ver",
    "log_brow_name",
    "log_brow_ver",
    "log_brow_type",
    "log_lang",
    "log_country",
    "log_cookie_check",
    "log_landing_url",
    "log_ref",
    "log_ref_host",
    "log_ref_search_key",
    "log_ref_type",
    "log_server_id",
    "log_service",
    "log_session_id",
)


@dataclass
class SessionRecord:
    """One row per user session: who, from where, with what environment.

    ``to_row``/``from_row`` map between attribute names and the stored
    ``log_*`` column names.
    """

    log_id: int
    opn_id: int
    datetime: datetime
    user_id: int
    username: str
    ip: str
    proxy: str
    os_name: str
    os_version: str
    browser_name: str
    browser_version: str
    browser_type: int
    lang: str
    country: str
    cookie_check: bool
    landing_url: str
    ref_name: str
    ref_host: str
    ref_search_key: str
    ref_type: int
    server_id: int
    service: str
    session_id: str

    def to_row(self) -> dict:
        return {
            "log_id": self.log_id,
            "log_opn_id": self.opn_id,
            "log_datetime": iso(self.datetime),
            "log_uid": self.user_id,
            "log_username": self.username,
            "log_ip": self.ip,
            "log_proxy": self.proxy,
            "log_os_name": self.os_name,
            "log_os_ver": self.os_version,
            "log_brow_name": self.browser_name,
            "log_brow_ver": self.browser_version,
            "log_brow_type": int(self.browser_type),
            "log_lang": self.lang,
            "log_country": self.country,
            "log_cookie_check": self.cookie_check,
            "log_landing_url": self.landing_url,
            "log_ref": self.ref_name,
            "log_ref_host": self.ref_host,
            "log_ref_search_key": self.ref_search_key,
            "log_ref_type": int(self.ref_type),
            "log_server_id": self.server_id,
            "log_service": self.service,
            "log_session_id": self.session_id,
        }

    @classmethod
    def from_row(cls, row: dict) -> "SessionRecord":
        return cls(
            log_id=row["log_id"],
            opn_id=row["log_opn_id"],
            datetime=parse_iso(row["log_datetime"]),
            user_id=row["log_uid"],
            username=row["log_username"],
            ip=row["log_ip"],
            proxy=row["log_proxy"],
            os_name=row["log_os_name"],
            os_version=row["log_os_ver"],
            browser_name=row["log_brow_name"],
            browser_version=row["log_brow_ver"],
            browser_type=row["log_brow_type"],
            lang=row["log_lang"],
            country=row["log_country"],
            cookie_check=row["log_cookie_check"],
            landing_url=row["log_landing_url"],
            ref_name=row["log_ref"],
            ref_host=row["log_ref_host"],
            ref_search_key=row["log_ref_search_key"],
            ref_type=row["log_ref_type"],
            server_id=row["log_server_id"],
            service=row["log_service"],
            session_id=row["log_session_id"],
        )


@dataclass
class PageviewRecord:
    """One row per page request, with application-specific payloads."""

    session_id: str
    seq: int
    datetime: datetime
    url: str
    app_header: str = ""
    app_message: str = ""
    cookie_snapshot: dict = field(default_factory=dict)
    session_snapshot: dict = field(default_factory=dict)
    post_snapshot: dict = field(default_factory=dict)
    get_snapshot: dict = field(default_factory=dict)
    gen_time_ms: int = 0
    db_delay_ms: int = 0
    error_code: int = 0
    server_id: int = 0
    service: str = ""

    def to_row(self) -> dict:
        row = {f.name: getattr(self, f.name) for f in fields(self)}
        row["datetime"] = iso(self.datetime)
        return row

    @classmethod
    def from_row(cls, row: dict) -> "PageviewRecord":
        kwargs = dict(row)
        kwargs["datetime"] = parse_iso(row["datetime"])
        return cls(**kwargs)
