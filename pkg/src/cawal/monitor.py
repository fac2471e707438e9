"""HTTP service for live monitoring, admin actions and report retrieval.

Read endpoints never mutate state; the three /api/admin POSTs delegate to
the session store. Auth is a single static bearer token from config.
"""

from __future__ import annotations

from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .config import EngineConfig
from .extract import canonical_json, day_filename
from .model import iso
from .session_store import AdminFlag, FlagKind, SessionStore, StaleSessionError
from .warehouse import UnknownMetricError, Warehouse, WarehouseError

# above this many live sessions, snapshots may be served from a cache this
# many seconds old to keep overhead bounded
SNAPSHOT_CACHE_THRESHOLD = 10_000
SNAPSHOT_CACHE_SECONDS = 1.0

_FLAG_KINDS = {
    "ban_user": FlagKind.BAN_USER,
    "user": FlagKind.BAN_USER,
    "ban_ip": FlagKind.BAN_IP,
    "ip": FlagKind.BAN_IP,
}


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class MonitorService:
    """Glue between the HTTP layer and the session store / warehouse."""

    def __init__(
        self,
        store: SessionStore,
        warehouse: Warehouse,
        config: EngineConfig,
        clock: Callable[[], datetime] | None = None,
    ):
        self.store = store
        self.warehouse = warehouse
        self.config = config
        self.clock = clock or _utcnow
        self._cached_at: datetime | None = None
        self._cached: dict | None = None

    # -- snapshot ----------------------------------------------------------

    def snapshot(self) -> dict:
        now = self.clock()
        if (
            self._cached is not None
            and self._cached_at is not None
            and self._cached["totals"]["active_sessions"]
            > SNAPSHOT_CACHE_THRESHOLD
            and (now - self._cached_at).total_seconds() < SNAPSHOT_CACHE_SECONDS
        ):
            return self._cached
        census = self.store.census(now)
        payload = {
            "taken_at": iso(census.taken_at),
            "per_server": {
                str(sid): dict(bucket)
                for sid, bucket in sorted(census.per_server.items())
            },
            "per_service": dict(census.per_service),
            "same_ip_groups": [[ip, n] for ip, n in census.same_ip_groups],
            "totals": dict(census.totals),
        }
        self._cached = payload
        self._cached_at = now
        return payload

    # -- admin actions -----------------------------------------------------

    def ban(self, kind: str, key: str) -> bool:
        flag_kind = _FLAG_KINDS.get(kind)
        if flag_kind is None or not key:
            raise ValueError(f"kind must be one of {sorted(set(_FLAG_KINDS))}")
        return self.store.set_flag(AdminFlag(flag_kind, key, self.clock()))

    def unban(self, kind: str, key: str) -> bool:
        flag_kind = _FLAG_KINDS.get(kind)
        if flag_kind is None or not key:
            raise ValueError(f"kind must be one of {sorted(set(_FLAG_KINDS))}")
        return self.store.clear_flag(flag_kind, key)

    def kick(self, session_id: str) -> None:
        self.store.kick(session_id, self.clock())

    # -- reports -----------------------------------------------------------

    def day_report(self, day: str) -> bytes | None:
        """Stored record for one date, byte-for-byte as loaded; falls back
        to the extractor's output file when the warehouse misses."""
        rec = self.warehouse.get_day(day)
        if rec is not None:
            return canonical_json(rec.to_row()).encode("utf-8")
        path = Path(self.config.analytics_dir) / day_filename(day)
        if path.exists():
            return path.read_bytes()
        return None

    def range_report(
        self, metric: str, from_date: date, to_date: date, group_by: str | None
    ) -> bytes:
        result = self.warehouse.query_range(metric, from_date, to_date, group_by)
        return canonical_json(result).encode("utf-8")


class FlagBody(BaseModel):
    kind: str
    key: str


class KickBody(BaseModel):
    session_id: str


def create_app(service: MonitorService) -> FastAPI:
    app = FastAPI(title="cawal monitor", docs_url=None, redoc_url=None)
    expected = f"Bearer {service.config.admin_token}"

    def require_token(authorization: str | None = Header(default=None)) -> None:
        if authorization != expected:
            raise HTTPException(status_code=401, detail="missing or invalid token")

    auth = Depends(require_token)

    @app.get("/api/monitor/snapshot", dependencies=[auth])
    def snapshot() -> JSONResponse:
        return JSONResponse(service.snapshot())

    @app.post("/api/admin/ban", dependencies=[auth])
    def ban(body: FlagBody) -> JSONResponse:
        try:
            created = service.ban(body.kind, body.key)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if not created:
            raise HTTPException(status_code=409, detail="flag already present")
        return JSONResponse({"ok": True, "kind": body.kind, "key": body.key})

    @app.post("/api/admin/unban", dependencies=[auth])
    def unban(body: FlagBody) -> JSONResponse:
        try:
            removed = service.unban(body.kind, body.key)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if not removed:
            raise HTTPException(status_code=404, detail="no such flag")
        return JSONResponse({"ok": True, "kind": body.kind, "key": body.key})

    @app.post("/api/admin/kick", dependencies=[auth])
    def kick(body: KickBody) -> JSONResponse:
        try:
            service.kick(body.session_id)
        except StaleSessionError:
            raise HTTPException(status_code=404, detail="no such live session")
        return JSONResponse({"ok": True, "session_id": body.session_id})

    @app.get("/api/reports/day/{day}", dependencies=[auth])
    def day_report(day: str) -> Response:
        try:
            date.fromisoformat(day)
        except ValueError:
            raise HTTPException(status_code=400, detail="date must be YYYY-MM-DD")
        body = service.day_report(day)
        if body is None:
            raise HTTPException(status_code=404, detail=f"no report for {day}")
        return Response(content=body, media_type="application/json")

    @app.get("/api/reports/range", dependencies=[auth])
    def range_report(
        metric: str,
        from_date: str = Query(alias="from"),
        to_date: str = Query(alias="to"),
        group_by: str | None = Query(default=None),
    ) -> Response:
        try:
            d1 = date.fromisoformat(from_date)
            d2 = date.fromisoformat(to_date)
        except ValueError:
            raise HTTPException(status_code=400, detail="dates must be YYYY-MM-DD")
        try:
            body = service.range_report(metric, d1, d2, group_by)
        except (UnknownMetricError, WarehouseError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return Response(content=body, media_type="application/json")

    return app
