"""Monthly data marts over daily analytics records, with range queries.

Layout: one directory per year, one JSON file per month keyed by date.
Chosen for diff-ability; a relational warehouse would obscure the oracle
tests without adding capability at this scale.

Range totals for ratio metrics are recomputed from summed numerators and
denominators, never averaged across days.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from .extract import AnalyticsDay, canonical_json
from .model import ORIGIN_LABELS, RefType


class WarehouseError(Exception):
    pass


class SealedMartError(WarehouseError):
    pass


class UnknownMetricError(WarehouseError):
    def __init__(self, metric: str, valid: list[str]):
        self.metric = metric
        self.valid = valid
        super().__init__(
            f"unknown metric {metric!r}; valid: {', '.join(valid)}"
        )


# scalar fields that sum meaningfully across days
COUNT_METRICS = (
    "sessions_total",
    "pageviews_total",
    "unique_users",
    "guest_sessions",
    "authenticated_sessions",
    "in_house_users",
    "in_house_sessions",
    "in_house_pageviews",
    "in_country_users",
    "in_country_sessions",
    "in_country_pageviews",
    "out_country_users",
    "out_country_sessions",
    "out_country_pageviews",
    "total_gen_time_ms",
    "total_db_delay_ms",
    "slow_page_count",
    "error_count",
    "unauthorized_attempt_count",
    "distinct_ips",
    "multi_session_ip_count",
    "bot_sessions",
    "mobile_sessions",
    "desktop_sessions",
    "cookie_sessions",
    "bounce_sessions",
    "total_session_duration_s",
)

# ratio metric -> (numerator field, denominator field); range values are
# sum(num)/sum(den), per-day values the same division on that day
RATIO_METRICS = {
    "pageviews_per_session": ("pageviews_total", "sessions_total"),
    "pageviews_per_user": ("pageviews_total", "unique_users"),
    "sessions_per_user": ("sessions_total", "unique_users"),
    "avg_gen_time_ms": ("total_gen_time_ms", "pageviews_total"),
    "avg_db_delay_ms": ("total_db_delay_ms", "pageviews_total"),
    "avg_session_duration_s": ("total_session_duration_s", "sessions_total"),
}

# per-day-only scalars: reported in series, no range total
SERIES_ONLY_METRICS = (
    "peak_hour",
    "peak_hour_pageviews",
    "p50_gen_time_ms",
    "p95_gen_time_ms",
    "max_gen_time_ms",
    "p95_db_delay_ms",
    "servers_count",
    "services_count",
)

GROUPS = ("server", "origin", "referrer_type")

# metrics each grouping can slice using the stored aggregates
_GROUPABLE = {
    "server": ("sessions_total", "pageviews_total", "unique_users",
               "pageviews_per_session"),
    "origin": ("sessions_total", "pageviews_total", "unique_users",
               "pageviews_per_session"),
    "referrer_type": ("sessions_total",),
}

_REF_LABELS = tuple(t.name.lower() for t in RefType)


def valid_metrics(group_by: str | None = None) -> list[str]:
    if group_by is None:
        return sorted(COUNT_METRICS) + sorted(RATIO_METRICS) + sorted(
            SERIES_ONLY_METRICS
        )
    return sorted(_GROUPABLE.get(group_by, ()))


@dataclass(frozen=True)
class MartInfo:
    year: int
    month: int
    sealed: bool
    days: int


class Warehouse:
    """Single writer per mart; month files are immutable between loads."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _mart_path(self, year: int, month: int) -> Path:
        return self.root / f"{year:04d}" / f"{year:04d}-{month:02d}.json"

    def _read_mart(self, year: int, month: int) -> dict | None:
        path = self._mart_path(year, month)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_mart(self, mart: dict) -> Path:
        path = self._mart_path(mart["year"], mart["month"])
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(canonical_json(mart) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path

    # -- loading -----------------------------------------------------------

    def load_day(self, rec: AnalyticsDay, force: bool = False) -> Path:
        """Upsert one day into its month's mart; idempotent per date.

        A new month gets a new mart file and a January load creates the
        year directory, so month and year transitions need no operator
        intervention. Sealed marts reject loads unless forced.
        """
        day = date.fromisoformat(rec.date)
        with self._lock:
            mart = self._read_mart(day.year, day.month)
            if mart is None:
                mart = {
                    "year": day.year,
                    "month": day.month,
                    "sealed": False,
                    "days": {},
                }
            if mart["sealed"] and not force:
                raise SealedMartError(
                    f"mart {day.year}-{day.month:02d} is sealed; "
                    "use force to backfill"
                )
            mart["days"][rec.date] = rec.to_row()
            return self._write_mart(mart)

    def load_file(self, path: str | Path, force: bool = False) -> Path:
        rec = AnalyticsDay.from_json(Path(path).read_text(encoding="utf-8"))
        return self.load_day(rec, force=force)

    def seal_month(self, year: int, month: int) -> None:
        with self._lock:
            mart = self._read_mart(year, month)
            if mart is None:
                raise WarehouseError(f"no mart for {year}-{month:02d}")
            mart["sealed"] = True
            self._write_mart(mart)

    def rollover(self, asof: date) -> list[tuple[int, int]]:
        """Seal every mart strictly before the current month; returns the
        months sealed by this call."""
        sealed = []
        for info in self.marts():
            if (info.year, info.month) < (asof.year, asof.month) and not info.sealed:
                self.seal_month(info.year, info.month)
                sealed.append((info.year, info.month))
        return sealed

    # -- reads -------------------------------------------------------------

    def marts(self) -> list[MartInfo]:
        out = []
        for year_dir in sorted(self.root.glob("[0-9][0-9][0-9][0-9]")):
            for path in sorted(year_dir.glob("*.json")):
                mart = json.loads(path.read_text(encoding="utf-8"))
                out.append(
                    MartInfo(
                        mart["year"],
                        mart["month"],
                        mart["sealed"],
                        len(mart["days"]),
                    )
                )
        return out

    def get_day(self, day: date | str) -> AnalyticsDay | None:
        day_str = day.isoformat() if isinstance(day, date) else day
        d = date.fromisoformat(day_str)
        mart = self._read_mart(d.year, d.month)
        if mart is None:
            return None
        row = mart["days"].get(day_str)
        return AnalyticsDay.from_row(row) if row is not None else None

    def _rows_between(self, from_date: date, to_date: date):
        """Yield (date_str, row|None) per day; missing days are explicit."""
        marts: dict[tuple[int, int], dict | None] = {}
        day = from_date
        while day <= to_date:
            key = (day.year, day.month)
            if key not in marts:
                marts[key] = self._read_mart(*key)
            mart = marts[key]
            row = mart["days"].get(day.isoformat()) if mart else None
            yield day.isoformat(), row
            day += timedelta(days=1)

    # -- queries -----------------------------------------------------------

    def query_range(
        self,
        metric: str,
        from_date: date,
        to_date: date,
        group_by: str | None = None,
    ) -> dict:
        if from_date > to_date:
            raise ValueError("from_date must not be after to_date")
        if group_by is not None and group_by not in GROUPS:
            raise WarehouseError(
                f"unknown group_by {group_by!r}; valid: {', '.join(GROUPS)}"
            )
        if group_by is not None:
            if metric not in _GROUPABLE[group_by]:
                raise UnknownMetricError(metric, valid_metrics(group_by))
            return self._query_grouped(metric, from_date, to_date, group_by)
        if metric not in valid_metrics():
            raise UnknownMetricError(metric, valid_metrics())
        return self._query_plain(metric, from_date, to_date)

    def _query_plain(self, metric: str, from_date: date, to_date: date) -> dict:
        series = []
        total_num = 0
        total_den = 0
        total_count = 0
        have_any = False
        for day_str, row in self._rows_between(from_date, to_date):
            if row is None:
                series.append({"date": day_str, "value": None})
                continue
            have_any = True
            if metric in RATIO_METRICS:
                num_f, den_f = RATIO_METRICS[metric]
                num, den = row[num_f], row[den_f]
                total_num += num
                total_den += den
                series.append(
                    {"date": day_str, "value": num / den if den else 0.0}
                )
            else:
                value = row[metric]
                total_count += value
                series.append({"date": day_str, "value": value})
        if metric in RATIO_METRICS:
            total = (total_num / total_den) if total_den else 0.0
        elif metric in SERIES_ONLY_METRICS:
            total = None
        else:
            total = total_count
        if not have_any:
            total = None
        return {
            "metric": metric,
            "from": from_date.isoformat(),
            "to": to_date.isoformat(),
            "group_by": None,
            "series": series,
            "total": total,
        }

    def _group_counts(self, row: dict, metric: str, group_by: str) -> dict:
        """Per-group (numerator, denominator) pairs for one day; count
        metrics use denominator 1 markers handled by the caller."""
        if group_by == "server":
            field = {
                "sessions_total": "sessions",
                "pageviews_total": "pageviews",
                "unique_users": "unique_users",
            }.get(metric)
            if field is not None:
                return {
                    sid: (cell[field], 1)
                    for sid, cell in row["per_server"].items()
                }
            return {
                sid: (cell["pageviews"], cell["sessions"])
                for sid, cell in row["per_server"].items()
            }
        if group_by == "origin":
            field = {
                "sessions_total": "sessions",
                "pageviews_total": "pageviews",
                "unique_users": "users",
            }.get(metric)
            if field is not None:
                return {
                    label: (row[f"{label}_{field}"], 1)
                    for label in ORIGIN_LABELS
                }
            return {
                label: (row[f"{label}_pageviews"], row[f"{label}_sessions"])
                for label in ORIGIN_LABELS
            }
        freq = row["referrer_type_freq"]
        return {label: (freq[i], 1) for i, label in enumerate(_REF_LABELS)}

    def _query_grouped(
        self, metric: str, from_date: date, to_date: date, group_by: str
    ) -> dict:
        is_ratio = metric in RATIO_METRICS
        series = []
        num_totals: dict[str, int] = {}
        den_totals: dict[str, int] = {}
        for day_str, row in self._rows_between(from_date, to_date):
            if row is None:
                series.append({"date": day_str, "values": None})
                continue
            counts = self._group_counts(row, metric, group_by)
            values = {}
            for group, (num, den) in counts.items():
                num_totals[group] = num_totals.get(group, 0) + num
                den_totals[group] = den_totals.get(group, 0) + den
                values[group] = (num / den if den else 0.0) if is_ratio else num
            series.append({"date": day_str, "values": values})
        if is_ratio:
            totals = {
                g: (num_totals[g] / den_totals[g]) if den_totals[g] else 0.0
                for g in num_totals
            }
        else:
            totals = dict(num_totals)
        return {
            "metric": metric,
            "from": from_date.isoformat(),
            "to": to_date.isoformat(),
            "group_by": group_by,
            "series": series,
            "totals": totals,
        }
