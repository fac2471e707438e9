/** Hand-rolled API payloads for unit tests. The day record is built the
 * way the server builds one: aggregates first, scalars as their sums, so
 * the fidelity assertions hold by the same arithmetic the backend uses. */

import type { DayRecord, Snapshot } from "../src/types";

export function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    taken_at: "2019-06-01T12:00:00+00:00",
    per_server: {
      "1": { active_sessions: 3, guests: 1, authenticated: 2 },
      "2": { active_sessions: 2, guests: 2, authenticated: 0 },
    },
    per_service: { lms: 1, portal: 4 },
    same_ip_groups: [["10.1.2.3", 2]],
    totals: { active_sessions: 5, guests: 3, authenticated: 2 },
    ...overrides,
  };
}

export function makeDay(overrides: Partial<DayRecord> = {}): DayRecord {
  const hourly: number[][] = Array.from({ length: 24 }, () => [0, 0, 0]);
  // a morning and an evening bump, all three sex buckets used
  hourly[9] = [4, 11, 9];
  hourly[10] = [2, 14, 12];
  hourly[17] = [1, 20, 15];
  hourly[21] = [0, 7, 5];
  const pageviews = hourly.reduce(
    (acc, row) => acc + row[0]! + row[1]! + row[2]!,
    0,
  );

  const referrerFreq = [12, 3, 2, 6, 13, 4];
  const sessions = referrerFreq.reduce((a, b) => a + b, 0);
  const perServer = {
    "1": { sessions: 14, pageviews: 36, unique_users: 9 },
    "2": { sessions: 15, pageviews: 34, unique_users: 10 },
    "3": { sessions: 11, pageviews: 30, unique_users: 8 },
  };

  return {
    date: "2019-03-05",
    sessions_total: sessions,
    pageviews_total: pageviews,
    unique_users: 27,
    guest_sessions: 11,
    authenticated_sessions: 29,
    pageviews_per_session: pageviews / sessions,
    pageviews_per_user: pageviews / 27,
    sessions_per_user: sessions / 27,
    avg_session_duration_s: 412.5,
    peak_hour: 17,
    peak_hour_pageviews: 36,
    bounce_sessions: 6,
    bot_sessions: 1,
    hourly_by_sex: hourly,
    referrer_type_freq: referrerFreq,
    top_ref_hosts: [
      ["www.google.com", 13],
      ["news.example.org", 4],
      ["t.co", 2],
    ],
    landing_service_freq: [
      ["portal", 22],
      ["lms", 12],
      ["library", 6],
    ],
    logout_type_freq: [20, 12, 6, 2],
    per_server: perServer,
    ...overrides,
  };
}
