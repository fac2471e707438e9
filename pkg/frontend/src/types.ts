/** Payload shapes of the monitor HTTP API, as served. */

export interface ServerBucket {
  active_sessions: number;
  guests: number;
  authenticated: number;
}

export interface Snapshot {
  taken_at: string;
  per_server: Record<string, ServerBucket>;
  per_service: Record<string, number>;
  same_ip_groups: [string, number][];
  totals: ServerBucket & { active_sessions: number };
}

export interface PerServerCell {
  sessions: number;
  pageviews: number;
  unique_users: number;
}

/**
 * One daily analytics record. Only the fields the dashboard reads are
 * typed; the record carries more scalars and they pass through untouched.
 */
export interface DayRecord {
  date: string;
  sessions_total: number;
  pageviews_total: number;
  unique_users: number;
  guest_sessions: number;
  authenticated_sessions: number;
  pageviews_per_session: number;
  pageviews_per_user: number;
  sessions_per_user: number;
  avg_session_duration_s: number;
  peak_hour: number;
  peak_hour_pageviews: number;
  bounce_sessions: number;
  bot_sessions: number;
  // 24 rows of [na, male, female] pageview counts
  hourly_by_sex: number[][];
  // indexed by referrer class: direct, main_site, subdomain, external,
  // search_engine, social
  referrer_type_freq: number[];
  top_ref_hosts: [string, number][];
  landing_service_freq: [string, number][];
  // indexed by logout kind: none, explicit, window_close_timeout, kicked
  logout_type_freq: number[];
  per_server: Record<string, PerServerCell>;
  [extra: string]: unknown;
}

export interface RangePoint {
  date: string;
  value: number | null;
}

export interface GroupedRangePoint {
  date: string;
  values: Record<string, number> | null;
}

export interface RangeResult {
  metric: string;
  from: string;
  to: string;
  group_by: string | null;
  series: RangePoint[] | GroupedRangePoint[];
  total?: number | null;
  totals?: Record<string, number>;
}

export type FlagKind = "ban_user" | "ban_ip";
