/**
 * DOM rendering for everything that is not a chart.js canvas: the live
 * census panel, the daily scalar strip, the top-referrers table and the
 * range explorer output. All values are printed exactly as the API
 * returned them.
 */

import type { DayRecord, RangeResult, Snapshot } from "./types";
import type { PollState } from "./poll";

function el(tag: string, cls: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = cls;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function fmt(value: number | null | undefined): string {
  if (value === null || value === undefined) {
    return "–";
  }
  return Number.isInteger(value)
    ? value.toLocaleString("en-US")
    : value.toFixed(3);
}

export function renderSnapshotPanel(root: HTMLElement, state: PollState): void {
  root.replaceChildren();
  const snap = state.snapshot;
  if (!snap) {
    root.append(
      el("p", "empty", state.lastError ?? "waiting for first snapshot"),
    );
    return;
  }

  const badge = el(
    "div",
    state.stale ? "badge stale" : "badge live",
    state.stale ? `stale – last good ${state.lastGoodAt}` : `live ${snap.taken_at}`,
  );
  root.append(badge);

  const totals = el("div", "totals");
  const cells: [string, number][] = [
    ["active sessions", snap.totals.active_sessions],
    ["authenticated", snap.totals.authenticated],
    ["guests", snap.totals.guests],
  ];
  for (const [label, value] of cells) {
    const cell = el("div", "metric");
    cell.append(
      el("div", "metric-value", fmt(value)),
      el("div", "metric-label", label),
    );
    totals.append(cell);
  }
  root.append(totals);

  const serverTable = el("table", "census-table");
  serverTable.innerHTML =
    "<thead><tr><th>server</th><th>sessions</th><th>users</th><th>guests</th></tr></thead>";
  const tbody = document.createElement("tbody");
  for (const [sid, bucket] of Object.entries(snap.per_server)) {
    const tr = document.createElement("tr");
    tr.innerHTML =
      `<td>${sid}</td><td>${fmt(bucket.active_sessions)}</td>` +
      `<td>${fmt(bucket.authenticated)}</td><td>${fmt(bucket.guests)}</td>`;
    tbody.append(tr);
  }
  serverTable.append(tbody);
  root.append(serverTable);

  const services = el("div", "services");
  for (const [svc, n] of Object.entries(snap.per_service)) {
    services.append(el("span", "chip", `${svc}: ${fmt(n)}`));
  }
  root.append(services);

  const ipBlock = el("div", "same-ip");
  ipBlock.append(el("h3", "", "same-IP groups"));
  if (snap.same_ip_groups.length === 0) {
    ipBlock.append(el("p", "empty", "none"));
  } else {
    const list = document.createElement("ul");
    for (const [ip, n] of snap.same_ip_groups) {
      const li = document.createElement("li");
      li.textContent = `${ip} – ${fmt(n)} sessions`;
      list.append(li);
    }
    ipBlock.append(list);
  }
  root.append(ipBlock);
}

const SCALAR_STRIP: [keyof DayRecord & string, string][] = [
  ["sessions_total", "sessions"],
  ["pageviews_total", "pageviews"],
  ["unique_users", "unique users"],
  ["pageviews_per_session", "PV / session"],
  ["pageviews_per_user", "PV / user"],
  ["sessions_per_user", "sessions / user"],
  ["bounce_sessions", "bounces"],
  ["bot_sessions", "bot sessions"],
];

export function renderDayScalars(root: HTMLElement, day: DayRecord): void {
  root.replaceChildren();
  for (const [field, label] of SCALAR_STRIP) {
    const cell = el("div", "metric");
    cell.append(
      el("div", "metric-value", fmt(day[field] as number)),
      el("div", "metric-label", label),
    );
    root.append(cell);
  }
}

export function renderTopReferrers(
  root: HTMLElement,
  rows: [string, number][],
): void {
  root.replaceChildren();
  if (rows.length === 0) {
    root.append(el("p", "empty", "no external referrers recorded"));
    return;
  }
  const table = el("table", "ref-table");
  table.innerHTML = "<thead><tr><th>#</th><th>host</th><th>sessions</th></tr></thead>";
  const tbody = document.createElement("tbody");
  rows.forEach(([host, n], i) => {
    const tr = document.createElement("tr");
    tr.innerHTML = `<td>${i + 1}</td><td>${host}</td><td>${fmt(n)}</td>`;
    tbody.append(tr);
  });
  table.append(tbody);
  root.append(table);
}

export function renderDayEmptyState(root: HTMLElement, message: string): void {
  root.replaceChildren(el("p", "empty", message));
}

export function renderRangeResult(root: HTMLElement, result: RangeResult): void {
  root.replaceChildren();
  const table = el("table", "range-table");
  const grouped = result.group_by !== null;
  const groups = grouped ? Object.keys(result.totals ?? {}).sort() : [];

  const head = document.createElement("thead");
  const headRow = document.createElement("tr");
  headRow.append(el("th", "", "date"));
  if (grouped) {
    for (const g of groups) {
      headRow.append(el("th", "", g));
    }
  } else {
    headRow.append(el("th", "", result.metric));
  }
  head.append(headRow);
  table.append(head);

  const tbody = document.createElement("tbody");
  for (const point of result.series) {
    const tr = document.createElement("tr");
    tr.append(el("td", "", point.date));
    if (grouped) {
      const values = (point as { values: Record<string, number> | null }).values;
      for (const g of groups) {
        tr.append(el("td", "num", fmt(values ? values[g] : null)));
      }
    } else {
      tr.append(
        el("td", "num", fmt((point as { value: number | null }).value)),
      );
    }
    tbody.append(tr);
  }
  table.append(tbody);

  const foot = document.createElement("tfoot");
  const footRow = document.createElement("tr");
  footRow.append(el("th", "", "total"));
  if (grouped) {
    for (const g of groups) {
      footRow.append(el("th", "num", fmt((result.totals ?? {})[g])));
    }
  } else {
    footRow.append(el("th", "num", fmt(result.total)));
  }
  foot.append(footRow);
  table.append(foot);

  root.append(table);
}
