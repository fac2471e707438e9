/**
 * Typed client for the monitor service. Every dashboard number comes
 * through here; nothing else talks to the network.
 */

import type { DayRecord, FlagKind, RangeResult, Snapshot } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }

  get unauthorized(): boolean {
    return this.status === 401;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private token: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = {
      method,
      headers: { Authorization: `Bearer ${this.token}` },
    };
    if (body !== undefined) {
      init.headers = { ...init.headers, "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let res: Response;
    try {
      res = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    if (!res.ok) {
      let detail = res.statusText || `HTTP ${res.status}`;
      try {
        const payload = await res.json();
        if (payload && typeof payload.detail === "string") {
          detail = payload.detail;
        }
      } catch {
        // body was not JSON; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  snapshot(): Promise<Snapshot> {
    return this.request("GET", "/api/monitor/snapshot");
  }

  ban(kind: FlagKind, key: string): Promise<{ ok: boolean }> {
    return this.request("POST", "/api/admin/ban", { kind, key });
  }

  unban(kind: FlagKind, key: string): Promise<{ ok: boolean }> {
    return this.request("POST", "/api/admin/unban", { kind, key });
  }

  kick(sessionId: string): Promise<{ ok: boolean }> {
    return this.request("POST", "/api/admin/kick", { session_id: sessionId });
  }

  day(date: string): Promise<DayRecord> {
    return this.request("GET", `/api/reports/day/${encodeURIComponent(date)}`);
  }

  range(
    metric: string,
    from: string,
    to: string,
    groupBy?: string,
  ): Promise<RangeResult> {
    const params = new URLSearchParams({ metric, from, to });
    if (groupBy) {
      params.set("group_by", groupBy);
    }
    return this.request("GET", `/api/reports/range?${params.toString()}`);
  }
}
