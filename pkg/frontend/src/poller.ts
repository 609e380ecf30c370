import type { FrameResult } from "./api.js";
import type { FrameMeta } from "./types.js";

export interface PollerDeps {
  /** Long-poll one frame newer than `since` (null on server timeout). */
  poll(since: number): Promise<FrameResult | null>;
  onFrame(meta: FrameMeta, blob: Blob): void;
  onError?(err: unknown): void;
  /** Injected for tests. */
  sleep?(ms: number): Promise<void>;
}

const BACKOFF_START_MS = 500;
const BACKOFF_MAX_MS = 8000;

/** One in-flight long-poll at a time; strictly seq-ordered delivery with
 * stale responses dropped; exponential backoff on transport errors that
 * resets after the first good response. */
export class FramePoller {
  private since = -1;
  private running = false;
  private backoffMs = BACKOFF_START_MS;
  private readonly deps: PollerDeps;
  private loopPromise: Promise<void> | null = null;

  constructor(deps: PollerDeps) {
    this.deps = deps;
  }

  get lastSeq(): number {
    return this.since;
  }

  get currentBackoffMs(): number {
    return this.backoffMs;
  }

  start(): void {
    if (this.running) {
      return;
    }
    this.running = true;
    this.loopPromise = this.loop();
  }

  /** Ask the loop to end after the in-flight poll settles (safe to call
   * from inside the poll function itself). */
  requestStop(): void {
    this.running = false;
  }

  async stop(): Promise<void> {
    this.requestStop();
    await this.loopPromise;
  }

  private sleep(ms: number): Promise<void> {
    if (this.deps.sleep) {
      return this.deps.sleep(ms);
    }
    return new Promise((resolve) => setTimeout(resolve, ms));
  }

  private async loop(): Promise<void> {
    while (this.running) {
      try {
        const result = await this.deps.poll(this.since);
        this.backoffMs = BACKOFF_START_MS;
        if (result === null) {
          continue; // server timeout: immediately re-poll
        }
        if (result.meta.seq <= this.since) {
          continue; // stale or duplicate response: discard
        }
        this.since = result.meta.seq;
        this.deps.onFrame(result.meta, result.blob);
      } catch (err) {
        this.deps.onError?.(err);
        await this.sleep(this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
      }
    }
  }
}
