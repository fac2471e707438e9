/**
 * Browser entry point: token handling, the 5-second census poll, admin
 * actions with confirmation, and the report/range views. Everything
 * rendered here is a pass-through of API values; the chart configs come
 * from charts.ts and the plain-DOM panels from panels.ts.
 */

import Chart from "chart.js/auto";

import { ApiClient, ApiError } from "./api";
import { buildAllCharts, topReferrerRows } from "./charts";
import { rangeToCsv } from "./csv";
import {
  renderDayEmptyState,
  renderDayScalars,
  renderRangeResult,
  renderSnapshotPanel,
  renderTopReferrers,
} from "./panels";
import { DEFAULT_POLL_MS, Poller } from "./poll";

const TOKEN_KEY = "cawal_token";

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

function input(id: string): HTMLInputElement {
  return $(id) as HTMLInputElement;
}

function select(id: string): HTMLSelectElement {
  return $(id) as HTMLSelectElement;
}

function setStatus(message: string, isError = false): void {
  const node = $("action-status");
  node.textContent = message;
  node.className = isError ? "status error" : "status ok";
}

function main(): void {
  // token lives in session storage only; a new tab asks again
  let token = sessionStorage.getItem(TOKEN_KEY) ?? "";
  const client = new ApiClient("", token);

  const tokenOverlay = $("token-overlay");
  const showTokenPrompt = (message: string) => {
    $("token-message").textContent = message;
    tokenOverlay.classList.remove("hidden");
  };
  $("token-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    token = input("token-input").value.trim();
    sessionStorage.setItem(TOKEN_KEY, token);
    client.setToken(token);
    tokenOverlay.classList.add("hidden");
    void poller.tick();
  });
  if (!token) {
    showTokenPrompt("enter the admin token to connect");
  }

  // -- live census -------------------------------------------------------

  const poller = new Poller(
    client,
    (state) => {
      renderSnapshotPanel($("snapshot-panel"), state);
      if (state.unauthorized) {
        showTokenPrompt("token rejected; enter a valid admin token");
      }
    },
    DEFAULT_POLL_MS,
  );
  poller.start();

  // -- admin actions -----------------------------------------------------

  const flagKind = () =>
    select("flag-kind").value === "ban_ip" ? "ban_ip" : "ban_user";

  $("ban-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const key = input("flag-key").value.trim();
    if (!key) {
      return;
    }
    if (!window.confirm(`Ban ${flagKind()} "${key}"?`)) {
      return;
    }
    client
      .ban(flagKind(), key)
      .then(() => setStatus(`banned ${key}`))
      .catch((err: ApiError) => setStatus(err.message, true));
  });

  $("unban-button").addEventListener("click", () => {
    const key = input("flag-key").value.trim();
    if (!key || !window.confirm(`Lift ${flagKind()} ban on "${key}"?`)) {
      return;
    }
    client
      .unban(flagKind(), key)
      .then(() => setStatus(`unbanned ${key}`))
      .catch((err: ApiError) => setStatus(err.message, true));
  });

  $("kick-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const sid = input("kick-sid").value.trim();
    if (!sid || !window.confirm(`Kick session ${sid}?`)) {
      return;
    }
    client
      .kick(sid)
      .then(() => {
        setStatus(`kicked ${sid}`);
        void poller.tick();
      })
      .catch((err: ApiError) => setStatus(err.message, true));
  });

  // -- daily report ------------------------------------------------------

  const liveCharts: Chart[] = [];
  const destroyCharts = () => {
    while (liveCharts.length) {
      liveCharts.pop()?.destroy();
    }
  };

  $("day-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const date = input("day-date").value;
    if (!date) {
      return;
    }
    client
      .day(date)
      .then((day) => {
        destroyCharts();
        $("day-charts").classList.remove("hidden");
        renderDayScalars($("day-scalars"), day);
        renderTopReferrers($("top-referrers"), topReferrerRows(day));
        const specs = buildAllCharts(day);
        for (const [name, spec] of Object.entries(specs)) {
          const canvas = $(`chart-${name}`) as HTMLCanvasElement;
          $(`chart-${name}-total`).textContent =
            `${spec.headlineTotal.toLocaleString("en-US")} ${spec.headlineLabel}`;
          liveCharts.push(
            new Chart(canvas, {
              type: spec.type,
              data: spec.data,
              options: spec.options,
            }),
          );
        }
      })
      .catch((err: ApiError) => {
        destroyCharts();
        $("day-charts").classList.add("hidden");
        renderDayEmptyState(
          $("day-scalars"),
          err.status === 404 ? `no report for ${date}` : err.message,
        );
        renderTopReferrers($("top-referrers"), []);
      });
  });

  // -- range explorer ----------------------------------------------------

  let lastRangeCsv: string | null = null;

  $("range-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const metric = input("range-metric").value.trim();
    const from = input("range-from").value;
    const to = input("range-to").value;
    const groupBy = select("range-group").value || undefined;
    if (!metric || !from || !to) {
      return;
    }
    client
      .range(metric, from, to, groupBy)
      .then((result) => {
        renderRangeResult($("range-result"), result);
        lastRangeCsv = rangeToCsv(result);
        $("range-csv").classList.remove("hidden");
      })
      .catch((err: ApiError) => {
        lastRangeCsv = null;
        $("range-csv").classList.add("hidden");
        renderDayEmptyState($("range-result"), err.message);
      });
  });

  $("range-csv").addEventListener("click", () => {
    if (lastRangeCsv === null) {
      return;
    }
    const blob = new Blob([lastRangeCsv], { type: "text/csv" });
    const url = URL.createObjectURL(blob);
    const link = document.createElement("a");
    link.href = url;
    link.download = "range.csv";
    link.click();
    URL.revokeObjectURL(url);
  });
}

document.addEventListener("DOMContentLoaded", main);
