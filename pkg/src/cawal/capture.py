"""In-process data collection at request begin and end.

``begin_request`` resolves or creates the visitor's live session (emitting
one SessionRecord on creation) and hands back a request-scoped handle;
``finalize_request`` computes the page generation time, merges the
application's own data and appends exactly one PageviewRecord — the single
log-store interaction of the server-side tracking path.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from datetime import datetime
from urllib.parse import urlsplit

from .enrich import Enricher, visitor_hash
from .log_store import LogStore
from .model import (
    LogoutType,
    PageviewRecord,
    SessionRecord,
    SessionState,
    truncate_text,
)
from .session_store import BannedError, SessionStore, StaleSessionError

# finalize_request ran after the session had been kicked; the record is still
# written, flagged with this reserved error code.
ERROR_FINALIZED_AFTER_KICK = 990

MASK = "***"


class CaptureError(Exception):
    pass


class DoubleFinalizeError(CaptureError):
    pass


@dataclass(frozen=True)
class RequestContext:
    """Everything the capture layer needs from one incoming request."""

    ip: str
    user_agent: str
    url: str
    service: str
    server_id: int
    now: datetime
    referrer: str = ""
    user_id: int | None = None
    username: str = ""
    token: str | None = None
    lang: str = ""
    forwarded_for: str = ""


@dataclass
class AppData:
    """Application-specific payload merged at request end."""

    header: str = ""
    message: str = ""
    cookie_snapshot: dict = field(default_factory=dict)
    session_snapshot: dict = field(default_factory=dict)
    post_snapshot: dict = field(default_factory=dict)
    get_snapshot: dict = field(default_factory=dict)
    db_delay_ms: int = 0
    error_code: int = 0


@dataclass
class CaptureHandle:
    session_id: str
    seq: int
    started: datetime
    url: str
    service: str
    server_id: int
    finalized: bool = False


def visitor_key_for(ctx: RequestContext) -> str:
    """Identity used to join requests into one session: authenticated users
    by id, guests by their first-party token, else by an ip+ua hash."""
    if ctx.user_id is not None:
        return f"u:{ctx.user_id}"
    if ctx.token:
        return f"t:{ctx.token}"
    return f"h:{visitor_hash(ctx.ip, ctx.user_agent)}"


class Capture:
    """The capture API embedded at the start and end of every page request.

    Handles are confined to one request flow; different requests may begin
    and finalize fully concurrently.
    """

    def __init__(
        self,
        store: SessionStore,
        log: LogStore,
        enricher: Enricher,
        mask_keys: tuple[str, ...] = ("password", "token", "secret"),
        snapshot_value_limit: int = 255,
    ):
        self.store = store
        self.log = log
        self.enricher = enricher
        self.mask_keys = tuple(k.lower() for k in mask_keys)
        self.snapshot_value_limit = snapshot_value_limit
        self._log_id = itertools.count(1)
        self._opn_counters: dict[int, itertools.count] = {}
        self._lock = threading.Lock()
        self.rejected_count = 0

    def _next_opn_id(self, server_id: int) -> int:
        with self._lock:
            counter = self._opn_counters.setdefault(server_id, itertools.count(1))
            return server_id * 100_000_000 + next(counter)

    def begin_request(self, ctx: RequestContext) -> CaptureHandle:
        """Join or open the visitor's session and allocate the next pageview
        sequence number. Raises BannedError when an active flag matches."""
        key = visitor_key_for(ctx)
        try:
            session, created = self.store.open_or_join(
                key, ctx.user_id, ctx.ip, ctx.server_id, ctx.service, ctx.now
            )
        except BannedError:
            with self._lock:
                self.rejected_count += 1
            raise
        try:
            self.store.touch(session.session_id, ctx.now)
            seq = self.store.allocate_seq(session.session_id)
        except StaleSessionError:
            # closed between join and touch; open a fresh session
            session, created = self.store.open_or_join(
                key, ctx.user_id, ctx.ip, ctx.server_id, ctx.service, ctx.now
            )
            seq = self.store.allocate_seq(session.session_id)
        if created:
            self.log.append_session(self._session_record(ctx, session.session_id))
        return CaptureHandle(
            session_id=session.session_id,
            seq=seq,
            started=ctx.now,
            url=truncate_text(ctx.url),
            service=ctx.service,
            server_id=ctx.server_id,
        )

    def _session_record(self, ctx: RequestContext, session_id: str) -> SessionRecord:
        ua = self.enricher.user_agent(ctx.user_agent)
        ref = self.enricher.referrer(ctx.referrer, _host_of(ctx.url))
        return SessionRecord(
            log_id=next(self._log_id),
            opn_id=self._next_opn_id(ctx.server_id),
            datetime=ctx.now,
            user_id=ctx.user_id or 0,
            username=truncate_text(ctx.username),
            ip=ctx.ip,
            proxy=truncate_text(ctx.forwarded_for),
            os_name=ua.os_name,
            os_version=ua.os_version,
            browser_name=ua.browser_name,
            browser_version=ua.browser_version,
            browser_type=int(ua.browser_type),
            lang=truncate_text(ctx.lang),
            country=self.enricher.country(ctx.ip),
            cookie_check=ctx.token is not None,
            landing_url=truncate_text(ctx.url),
            ref_name=truncate_text(self.enricher.referrer_display_name(ref)),
            ref_host=ref.ref_host,
            ref_search_key=ref.search_key,
            ref_type=int(ref.ref_type),
            server_id=ctx.server_id,
            service=ctx.service,
            session_id=session_id,
        )

    def finalize_request(
        self, handle: CaptureHandle, app: AppData, now: datetime
    ) -> PageviewRecord:
        """Compute the generation time, merge app data and append the one
        PageviewRecord for this request."""
        if handle.finalized:
            raise DoubleFinalizeError(handle.session_id)
        handle.finalized = True

        error_code = app.error_code
        session = self.store.get(handle.session_id)
        kicked = (
            session is not None
            and session.state == SessionState.CLOSED
            and session.logout_type == LogoutType.KICKED
        )
        if kicked and error_code == 0:
            error_code = ERROR_FINALIZED_AFTER_KICK

        gen_time_ms = max(0, round((now - handle.started).total_seconds() * 1000))
        rec = PageviewRecord(
            session_id=handle.session_id,
            seq=handle.seq,
            datetime=handle.started,
            url=handle.url,
            app_header=truncate_text(app.header),
            app_message=truncate_text(app.message),
            cookie_snapshot=self._clean(app.cookie_snapshot),
            session_snapshot=self._clean(app.session_snapshot),
            post_snapshot=self._clean(app.post_snapshot),
            get_snapshot=self._clean(app.get_snapshot),
            gen_time_ms=gen_time_ms,
            db_delay_ms=max(0, int(app.db_delay_ms)),
            error_code=error_code,
            server_id=handle.server_id,
            service=handle.service,
        )
        self.log.append_pageview(rec)
        try:
            self.store.record_pageview(handle.session_id)
        except StaleSessionError:
            pass  # session already harvested; the stored record stands
        return rec

    def _clean(self, snapshot: dict) -> dict:
        """Mask deny-listed keys and cap values before storage."""
        cleaned = {}
        for key, value in snapshot.items():
            if any(bad in key.lower() for bad in self.mask_keys):
                cleaned[key] = MASK
            else:
                cleaned[key] = truncate_text(str(value), self.snapshot_value_limit)
        return cleaned


def _host_of(url: str) -> str:
    try:
        return (urlsplit(url).hostname or "").lower()
    except ValueError:
        return ""
