from __future__ import annotations

import json
from datetime import date, datetime, timedelta, timezone

import pytest

from cawal.extract import (
    AnalyticsDay,
    JobLog,
    attribute_day,
    canonical_json,
    compute_day,
    day_filename,
    extract_day,
    load_profiles,
    nearest_rank,
    origin_of,
    read_day_file,
    run_nightly,
    visitor_identity,
    write_day_file,
    write_profiles,
)
from cawal.config import EngineConfig
from cawal.enrich import parse_cidrs
from cawal.model import LogoutType, OriginClass, Sex, UserProfile
from cawal.warehouse import Warehouse

from datagen import append_day, random_day
from oracles import day_oracle, diff_day

DAY = date(2019, 3, 5)
UTC = timezone.utc


def compute(seed: int, config: EngineConfig, n=130):
    sessions, pageviews, logout_types, profiles = random_day(seed, DAY, n_sessions=n)
    finals = {
        s.session_id: logout_types.get(s.session_id, LogoutType.WINDOW_CLOSE_TIMEOUT)
        for s in sessions
    }
    rec = compute_day(DAY, sessions, pageviews, finals, profiles, config)
    return rec, sessions, pageviews, finals, profiles


# -- oracle equivalence (in memory) ------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_compute_day_matches_oracle(seed, econfig):
    rec, sessions, pageviews, finals, profiles = compute(seed, econfig)
    expected = day_oracle(DAY, sessions, pageviews, finals, profiles, econfig)
    mismatches = diff_day(rec.to_row(), expected)
    assert not mismatches, "\n".join(mismatches)


def test_compute_day_empty_inputs(econfig):
    rec = compute_day(DAY, [], [], {}, {}, econfig)
    expected = day_oracle(DAY, [], [], {}, {}, econfig)
    assert not diff_day(rec.to_row(), expected)
    assert rec.sessions_total == 0
    assert rec.pageviews_per_session == 0.0
    assert rec.peak_hour == 0


# -- internal consistency ----------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_sum_invariants(seed, econfig):
    rec, *_ = compute(seed, econfig)
    assert sum(rec.referrer_type_freq) == rec.sessions_total
    assert sum(rec.logout_type_freq) == rec.sessions_total
    assert sum(sum(row) for row in rec.hourly_by_sex) == rec.pageviews_total
    assert (
        rec.in_house_sessions + rec.in_country_sessions + rec.out_country_sessions
        == rec.sessions_total
    )
    assert (
        rec.in_house_pageviews + rec.in_country_pageviews + rec.out_country_pageviews
        == rec.pageviews_total
    )
    assert sum(c["sessions"] for c in rec.per_server.values()) == rec.sessions_total
    assert sum(c["pageviews"] for c in rec.per_server.values()) == rec.pageviews_total
    assert sum(n for _, n in rec.landing_service_freq) == rec.sessions_total
    assert rec.guest_sessions + rec.authenticated_sessions == rec.sessions_total


def test_floats_are_single_divisions(econfig):
    rec, *_ = compute(3, econfig)
    assert rec.pageviews_per_session == rec.pageviews_total / rec.sessions_total
    assert rec.pageviews_per_user == rec.pageviews_total / rec.unique_users
    assert rec.avg_gen_time_ms == rec.total_gen_time_ms / rec.pageviews_total
    assert rec.avg_session_duration_s == (
        rec.total_session_duration_s / rec.sessions_total
    )


# -- identity and origin helpers ---------------------------------------------


def test_visitor_identity_guest_vs_authenticated():
    from factories import guest_session, user_session

    assert visitor_identity(user_session(5)) == ("u", 5)
    g = guest_session("1.2.3.4")
    assert visitor_identity(g)[0] == "g"
    assert visitor_identity(g) == visitor_identity(guest_session("1.2.3.4"))
    assert visitor_identity(g) != visitor_identity(guest_session("1.2.3.5"))


def test_origin_of_uses_stored_country_not_geo():
    from factories import guest_session

    cidrs = parse_cidrs(("10.0.0.0/8",))
    rec = guest_session("8.8.8.8")
    rec.country = "TR"  # stored at capture time; extraction must trust it
    assert origin_of(rec, "TR", cidrs) == OriginClass.IN_COUNTRY
    rec.country = "US"
    assert origin_of(rec, "TR", cidrs) == OriginClass.OUT_COUNTRY
    rec.ip = "10.0.0.9"
    assert origin_of(rec, "TR", cidrs) == OriginClass.IN_HOUSE


def test_nearest_rank_edges():
    assert nearest_rank([], 0.95) == 0
    assert nearest_rank([7], 0.5) == 7
    assert nearest_rank([1, 2, 3, 4], 0.5) == 2
    assert nearest_rank([1, 2, 3, 4, 5], 0.5) == 3
    assert nearest_rank(list(range(1, 101)), 0.95) == 95
    assert nearest_rank([1, 2], 0.0) == 1


def test_attribute_day_uses_local_timezone():
    from factories import guest_session

    rec = guest_session("1.1.1.1")
    rec.datetime = datetime(2019, 3, 5, 22, 30, tzinfo=UTC)
    cfg_utc = EngineConfig(timezone="UTC")
    cfg_ist = EngineConfig(timezone="Europe/Istanbul")
    assert attribute_day([rec], cfg_utc.tzinfo) == {rec.session_id: date(2019, 3, 5)}
    assert attribute_day([rec], cfg_ist.tzinfo) == {rec.session_id: date(2019, 3, 6)}


# -- serialization -----------------------------------------------------------


def test_canonical_json_is_stable():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
    assert canonical_json({"t": "ü"}) == '{"t":"\\u00fc"}'


def test_day_file_round_trip(tmp_path, econfig):
    rec, *_ = compute(2, econfig)
    path = write_day_file(rec, tmp_path)
    assert path.name == day_filename(DAY)
    assert not list(tmp_path.glob("*.tmp"))
    again = read_day_file(path)
    assert again == rec
    assert again.to_json() == rec.to_json()


def test_from_row_ignores_unknown_keys():
    rec = AnalyticsDay(date="2019-03-05", sessions_total=4)
    row = rec.to_row()
    row["left_over"] = True
    assert AnalyticsDay.from_row(row) == rec


def test_profiles_round_trip(tmp_path):
    profiles = {
        3: UserProfile(3, "user3", Sex.FEMALE),
        1: UserProfile(1, "user1", Sex.MALE),
    }
    path = tmp_path / "profiles.ndjson"
    write_profiles(profiles, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["user_id"] == 1  # sorted by uid
    assert load_profiles(path) == profiles


# -- extraction from a real partition ----------------------------------------


def test_extract_day_reads_staging(store, econfig):
    sessions, pageviews, logout_types, profiles = random_day(7, DAY)
    append_day(store, sessions, pageviews)
    store.rotate_day(DAY, logout_types)
    rec = extract_day(store, DAY, profiles, econfig)
    finals = {
        s.session_id: logout_types.get(s.session_id, LogoutType.WINDOW_CLOSE_TIMEOUT)
        for s in sessions
    }
    expected = day_oracle(DAY, sessions, pageviews, finals, profiles, econfig)
    assert not diff_day(rec.to_row(), expected)


def test_repeated_extraction_is_byte_identical(store, econfig):
    sessions, pageviews, logout_types, profiles = random_day(8, DAY)
    append_day(store, sessions, pageviews)
    store.rotate_day(DAY, logout_types)
    first = extract_day(store, DAY, profiles, econfig).to_json()
    second = extract_day(store, DAY, profiles, econfig).to_json()
    assert first == second


# -- nightly orchestration ---------------------------------------------------


def test_run_nightly_happy_path(store, econfig, frozen_clock):
    sessions, pageviews, logout_types, profiles = random_day(9, DAY)
    append_day(store, sessions, pageviews)
    warehouse = Warehouse(econfig.warehouse_dir)

    report = run_nightly(
        store,
        DAY,
        profiles,
        econfig,
        logout_types=logout_types,
        warehouse=warehouse,
        clock=frozen_clock,
    )
    assert report["ok"] is True
    assert [s["stage"] for s in report["stages"]] == [
        "rotate",
        "attribute",
        "extract",
        "load",
    ]
    assert all(s["ok"] for s in report["stages"])

    out = read_day_file(f"{econfig.analytics_dir}/{day_filename(DAY)}")
    assert out.sessions_total == len(sessions)
    assert warehouse.get_day(DAY) == out

    log_lines = open(econfig.job_log_path).read().splitlines()
    assert len(log_lines) == 4
    for line in log_lines:
        stamp, stage, message = line.split("\t", 2)
        assert stamp.startswith("2019-06-01")
        assert message


def test_run_nightly_skips_existing_output_unless_rerun(store, econfig, frozen_clock):
    sessions, pageviews, logout_types, profiles = random_day(10, DAY)
    append_day(store, sessions, pageviews)
    run_nightly(store, DAY, profiles, econfig, logout_types=logout_types,
                clock=frozen_clock)
    report = run_nightly(store, DAY, profiles, econfig, clock=frozen_clock)
    extract_stage = [s for s in report["stages"] if s["stage"] == "extract"][0]
    assert "kept" in extract_stage["message"]
    report = run_nightly(store, DAY, profiles, econfig, clock=frozen_clock,
                         rerun=True)
    extract_stage = [s for s in report["stages"] if s["stage"] == "extract"][0]
    assert "wrote" in extract_stage["message"]


def test_run_nightly_failure_stops_pipeline(store, econfig, frozen_clock):
    future = frozen_clock().date() + timedelta(days=2)
    report = run_nightly(store, future, {}, econfig, clock=frozen_clock)
    assert report["ok"] is False
    assert report["stages"][0]["stage"] == "rotate"
    assert report["stages"][0]["ok"] is False
    assert len(report["stages"]) == 1  # nothing ran after the failure
