/** Debounced, retrying upload queue for the painted keyframe.
 *
 * `commit` never blocks: it records the newest document and returns.  A
 * single queue drains it with at most one request in flight and upload
 * starts spaced at least `minIntervalMs` apart, so a burst of edits
 * collapses into one PUT carrying the final state.  Failures retry with
 * exponential backoff and are surfaced through the state callback.
 */

import type { PngCodec } from "./codec.js";
import type { CanvasDocument } from "./document.js";

export interface TransportReply {
  ok: boolean;
  status: number;
}

export interface Transport {
  put(path: string, body: Uint8Array): Promise<TransportReply>;
}

export interface Timers {
  set(fn: () => void, ms: number): unknown;
  clear(handle: unknown): void;
  now(): number;
}

const defaultTimers: Timers = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]),
  now: () => Date.now(),
};

export type CommitStatus = "idle" | "waiting" | "uploading" | "retrying";

export interface CommitterState {
  status: CommitStatus;
  pending: boolean;
  attempts: number;
  lastError: string | null;
  uploadsStarted: number;
  uploadsCompleted: number;
}

export interface CommitterOptions {
  transport: Transport;
  codec: PngCodec;
  minIntervalMs?: number;
  retryBaseMs?: number;
  retryMaxMs?: number;
  timers?: Timers;
  onState?: (state: CommitterState) => void;
}

export function stylePath(sessionId: string, keyframeIndex: number): string {
  return `/sessions/${sessionId}/keyframes/${keyframeIndex}/style`;
}

export function maskPath(sessionId: string, keyframeIndex: number): string {
  return `/sessions/${sessionId}/keyframes/${keyframeIndex}/mask`;
}

export class KeyframeCommitter {
  private readonly transport: Transport;
  private readonly codec: PngCodec;
  private readonly minIntervalMs: number;
  private readonly retryBaseMs: number;
  private readonly retryMaxMs: number;
  private readonly timers: Timers;
  private readonly onState?: (state: CommitterState) => void;

  private document: CanvasDocument | null = null;
  private pendingSince: number | null = null;
  private retryNotBefore = -Infinity;
  private lastStartAt = -Infinity;
  private timer: unknown = null;
  private inFlight = false;

  private readonly state: CommitterState = {
    status: "idle",
    pending: false,
    attempts: 0,
    lastError: null,
    uploadsStarted: 0,
    uploadsCompleted: 0,
  };

  constructor(options: CommitterOptions) {
    this.transport = options.transport;
    this.codec = options.codec;
    this.minIntervalMs = options.minIntervalMs ?? 1000;
    this.retryBaseMs = options.retryBaseMs ?? 500;
    this.retryMaxMs = options.retryMaxMs ?? 8000;
    this.timers = options.timers ?? defaultTimers;
    this.onState = options.onState;
  }

  /** Queues the document's current state for upload; returns immediately. */
  commit(document: CanvasDocument): void {
    this.document = document;
    if (this.pendingSince === null) this.pendingSince = this.timers.now();
    this.schedule();
  }

  snapshot(): CommitterState {
    return { ...this.state };
  }

  dispose(): void {
    if (this.timer !== null) this.timers.clear(this.timer);
    this.timer = null;
    this.pendingSince = null;
  }

  private emit(): void {
    this.state.pending = this.pendingSince !== null || this.inFlight;
    this.onState?.(this.snapshot());
  }

  private schedule(): void {
    if (this.inFlight || this.timer !== null || this.pendingSince === null) return;
    const deadline = Math.max(
      this.pendingSince + this.minIntervalMs,
      this.lastStartAt + this.minIntervalMs,
      this.retryNotBefore,
    );
    const delay = Math.max(0, deadline - this.timers.now());
    this.state.status = this.state.attempts > 0 ? "retrying" : "waiting";
    this.emit();
    this.timer = this.timers.set(() => {
      this.timer = null;
      void this.fire();
    }, delay);
  }

  private async fire(): Promise<void> {
    const document = this.document;
    if (document === null) return;
    this.pendingSince = null;
    this.inFlight = true;
    this.lastStartAt = this.timers.now();
    this.state.uploadsStarted += 1;
    this.state.status = "uploading";
    this.emit();

    const revision = document.revision;
    try {
      // With no strokes the flatten is the identity: re-upload the
      // original bytes so the round trip is byte-for-byte.
      const bytes =
        document.strokes.length === 0
          ? document.basePng
          : await this.codec.encode(document.flatten().buffer);
      const reply = await this.transport.put(
        stylePath(document.binding.sessionId, document.binding.keyframeIndex),
        bytes,
      );
      if (!reply.ok) throw new Error(`upload rejected with status ${reply.status}`);
      this.state.uploadsCompleted += 1;
      this.state.attempts = 0;
      this.state.lastError = null;
      this.state.status = "idle";
      this.retryNotBefore = -Infinity;
      if (document.revision === revision) document.dirty = false;
    } catch (error) {
      this.state.attempts += 1;
      this.state.lastError = error instanceof Error ? error.message : String(error);
      const backoff = Math.min(
        this.retryBaseMs * 2 ** (this.state.attempts - 1),
        this.retryMaxMs,
      );
      this.retryNotBefore = this.timers.now() + backoff;
      if (this.pendingSince === null) this.pendingSince = this.timers.now();
    } finally {
      this.inFlight = false;
      this.emit();
      this.schedule();
    }
  }
}
