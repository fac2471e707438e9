/**
 * Chart configuration builders for the daily report. Each builder turns
 * the fetched record into a chart.js config plus the headline total to
 * print beside the chart.
 *
 * The headline totals are the record's own scalar fields, never sums
 * recomputed here: the dashboard displays what the server computed. The
 * test suite separately asserts that each chart's plotted values do sum
 * to that scalar, which is the fidelity contract for these builders.
 */

import type { DayRecord } from "./types";

export const SEX_LABELS = ["unknown", "male", "female"] as const;

export const REF_TYPE_LABELS = [
  "direct",
  "main site",
  "subdomain",
  "external",
  "search engine",
  "social",
] as const;

export const LOGOUT_LABELS = [
  "still open",
  "explicit",
  "window close / timeout",
  "kicked",
] as const;

const PALETTE = [
  "#4e79a7",
  "#f28e2b",
  "#59a14f",
  "#e15759",
  "#b07aa1",
  "#76b7b2",
  "#edc948",
  "#9c755f",
];

function color(i: number): string {
  return PALETTE[i % PALETTE.length] as string;
}

export interface ChartSpec {
  // matches the chart.js constructor argument
  type: "line" | "bar" | "doughnut";
  data: {
    labels: string[];
    datasets: { label: string; data: number[]; [opt: string]: unknown }[];
  };
  options: Record<string, unknown>;
  /** Scalar from the record shown as the chart headline. */
  headlineTotal: number;
  headlineLabel: string;
}

/** Sum of every plotted value; what the fidelity tests compare. */
export function plottedTotal(spec: ChartSpec): number {
  return spec.data.datasets.reduce(
    (acc, ds) => acc + ds.data.reduce((a, b) => a + b, 0),
    0,
  );
}

const BASE_OPTIONS = {
  responsive: true,
  maintainAspectRatio: false,
  animation: false,
  plugins: { legend: { position: "bottom" as const } },
};

export function hourlyBySexChart(day: DayRecord): ChartSpec {
  const hours = Array.from({ length: 24 }, (_, h) => `${h}:00`);
  return {
    type: "line",
    data: {
      labels: hours,
      datasets: SEX_LABELS.map((label, sex) => ({
        label,
        data: day.hourly_by_sex.map((row) => row[sex] ?? 0),
        borderColor: color(sex),
        backgroundColor: color(sex) + "30",
        pointRadius: 2,
        tension: 0.25,
      })),
    },
    options: {
      ...BASE_OPTIONS,
      interaction: { intersect: false, mode: "index" },
      scales: { y: { beginAtZero: true } },
    },
    headlineTotal: day.pageviews_total,
    headlineLabel: "pageviews",
  };
}

export function referrerTypeChart(day: DayRecord): ChartSpec {
  return {
    type: "doughnut",
    data: {
      labels: [...REF_TYPE_LABELS],
      datasets: [
        {
          label: "sessions",
          data: [...day.referrer_type_freq],
          backgroundColor: REF_TYPE_LABELS.map((_, i) => color(i)),
          borderWidth: 0,
        },
      ],
    },
    options: { ...BASE_OPTIONS, cutout: "55%" },
    headlineTotal: day.sessions_total,
    headlineLabel: "sessions",
  };
}

export function landingServiceChart(day: DayRecord): ChartSpec {
  return {
    type: "doughnut",
    data: {
      labels: day.landing_service_freq.map(([svc]) => svc),
      datasets: [
        {
          label: "sessions",
          data: day.landing_service_freq.map(([, n]) => n),
          backgroundColor: day.landing_service_freq.map((_, i) => color(i)),
          borderWidth: 0,
        },
      ],
    },
    options: { ...BASE_OPTIONS, cutout: "55%" },
    headlineTotal: day.sessions_total,
    headlineLabel: "sessions",
  };
}

export function logoutTypeChart(day: DayRecord): ChartSpec {
  return {
    type: "doughnut",
    data: {
      labels: [...LOGOUT_LABELS],
      datasets: [
        {
          label: "sessions",
          data: [...day.logout_type_freq],
          backgroundColor: LOGOUT_LABELS.map((_, i) => color(i)),
          borderWidth: 0,
        },
      ],
    },
    options: { ...BASE_OPTIONS, cutout: "55%" },
    headlineTotal: day.sessions_total,
    headlineLabel: "sessions",
  };
}

/** Farm-balance bars: sessions and pageviews side by side per server. */
export function perServerChart(day: DayRecord): ChartSpec {
  const ids = Object.keys(day.per_server).sort(
    (a, b) => Number(a) - Number(b),
  );
  return {
    type: "bar",
    data: {
      labels: ids.map((id) => `server ${id}`),
      datasets: [
        {
          label: "sessions",
          data: ids.map((id) => day.per_server[id]?.sessions ?? 0),
          backgroundColor: color(0),
        },
        {
          label: "pageviews",
          data: ids.map((id) => day.per_server[id]?.pageviews ?? 0),
          backgroundColor: color(1),
        },
      ],
    },
    options: {
      ...BASE_OPTIONS,
      scales: { y: { beginAtZero: true } },
    },
    headlineTotal: day.sessions_total + day.pageviews_total,
    headlineLabel: "sessions + pageviews",
  };
}

/** Top referrer hosts are a ranked list, not a chart; capped server-side. */
export function topReferrerRows(day: DayRecord): [string, number][] {
  return day.top_ref_hosts.map(([host, n]) => [host, n]);
}

export function buildAllCharts(day: DayRecord): Record<string, ChartSpec> {
  return {
    hourly: hourlyBySexChart(day),
    referrers: referrerTypeChart(day),
    landing: landingServiceChart(day),
    logout: logoutTypeChart(day),
    servers: perServerChart(day),
  };
}
