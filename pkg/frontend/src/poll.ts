/**
 * Snapshot polling loop. One request in flight at a time: if a tick
 * fires while the previous fetch is still pending, that tick is
 * dropped, not queued. On failure the last good snapshot is kept and
 * flagged stale.
 */

import type { ApiClient, ApiError } from "./api";
import type { Snapshot } from "./types";

export const DEFAULT_POLL_MS = 5_000;

export interface PollState {
  snapshot: Snapshot | null;
  stale: boolean;
  lastGoodAt: string | null;
  lastError: string | null;
  unauthorized: boolean;
}

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  readonly state: PollState = {
    snapshot: null,
    stale: false,
    lastGoodAt: null,
    lastError: null,
    unauthorized: false,
  };

  constructor(
    private readonly client: Pick<ApiClient, "snapshot">,
    private readonly onChange: (state: PollState) => void,
    private readonly intervalMs: number = DEFAULT_POLL_MS,
  ) {}

  start(): void {
    this.stop();
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Runs one poll; skipped entirely while a previous one is pending. */
  async tick(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    this.inFlight = true;
    try {
      const snap = await this.client.snapshot();
      this.state.snapshot = snap;
      this.state.stale = false;
      this.state.lastGoodAt = snap.taken_at;
      this.state.lastError = null;
      this.state.unauthorized = false;
    } catch (err) {
      this.state.stale = this.state.snapshot !== null;
      this.state.lastError = err instanceof Error ? err.message : String(err);
      this.state.unauthorized =
        (err as ApiError).unauthorized === true;
    } finally {
      this.inFlight = false;
    }
    this.onChange(this.state);
  }
}
