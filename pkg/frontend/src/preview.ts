/** Live preview subscription over the service's push channel.
 *
 * Messages are `{frame, step, png}` JSON with a base64 PNG body.  Scrubbing
 * sends `{frame}` on the open socket; training is never restarted.  On
 * channel drop the client reconnects with backoff, and a stale flag is
 * raised whenever no preview has arrived for `staleAfterMs`.
 */

import { base64ToBytes, readPngSize } from "./codec.js";
import type { Timers } from "./committer.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface PreviewState {
  frameIndex: number | null;
  step: number | null;
  /** Latest pushed preview as PNG bytes. */
  image: Uint8Array | null;
  imageSize: { width: number; height: number } | null;
  scrubPosition: number | null;
  connected: boolean;
  stale: boolean;
  updatesReceived: number;
  socketsOpened: number;
  lastError: string | null;
}

export interface PreviewOptions {
  makeSocket?: SocketFactory;
  timers?: Timers;
  staleAfterMs?: number;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
  /** When set, pushed previews must match these dimensions exactly. */
  expectedSize?: { width: number; height: number };
  onUpdate?: (state: PreviewState) => void;
}

const defaultTimers: Timers = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]),
  now: () => Date.now(),
};

export function previewUrl(base: string, sessionId: string): string {
  return `${base.replace(/^http/, "ws")}/sessions/${sessionId}/preview`;
}

export class PreviewChannel {
  private readonly url: string;
  private readonly makeSocket: SocketFactory;
  private readonly timers: Timers;
  private readonly staleAfterMs: number;
  private readonly reconnectBaseMs: number;
  private readonly reconnectMaxMs: number;
  private readonly expectedSize?: { width: number; height: number };
  private readonly onUpdate?: (state: PreviewState) => void;

  private socket: SocketLike | null = null;
  private staleTimer: unknown = null;
  private reconnectTimer: unknown = null;
  private reconnectAttempts = 0;
  private closedByUser = false;

  private readonly state: PreviewState = {
    frameIndex: null,
    step: null,
    image: null,
    imageSize: null,
    scrubPosition: null,
    connected: false,
    stale: false,
    updatesReceived: 0,
    socketsOpened: 0,
    lastError: null,
  };

  constructor(url: string, options: PreviewOptions = {}) {
    this.url = url;
    this.makeSocket = options.makeSocket ?? ((target) => new WebSocket(target) as unknown as SocketLike);
    this.timers = options.timers ?? defaultTimers;
    this.staleAfterMs = options.staleAfterMs ?? 3000;
    this.reconnectBaseMs = options.reconnectBaseMs ?? 500;
    this.reconnectMaxMs = options.reconnectMaxMs ?? 8000;
    this.expectedSize = options.expectedSize;
    this.onUpdate = options.onUpdate;
  }

  snapshot(): PreviewState {
    return { ...this.state };
  }

  connect(): void {
    if (this.closedByUser || this.socket !== null) return;
    this.state.socketsOpened += 1;
    this.armStaleTimer();
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.state.connected = true;
      this.reconnectAttempts = 0;
      // Re-request the scrubbed frame after a reconnect.
      if (this.state.scrubPosition !== null) {
        socket.send(JSON.stringify({ frame: this.state.scrubPosition }));
      }
      this.emit();
    };
    socket.onmessage = (event) => this.receive(event.data);
    socket.onerror = () => {
      this.state.lastError = "preview channel error";
      this.emit();
    };
    socket.onclose = () => {
      this.socket = null;
      this.state.connected = false;
      this.emit();
      if (!this.closedByUser) this.scheduleReconnect();
    };
  }

  /** Switches the previewed frame without touching the connection. */
  scrub(frameIndex: number): void {
    this.state.scrubPosition = frameIndex;
    if (this.socket !== null && this.state.connected) {
      this.socket.send(JSON.stringify({ frame: frameIndex }));
    }
    this.emit();
  }

  close(): void {
    this.closedByUser = true;
    if (this.staleTimer !== null) this.timers.clear(this.staleTimer);
    if (this.reconnectTimer !== null) this.timers.clear(this.reconnectTimer);
    this.staleTimer = null;
    this.reconnectTimer = null;
    this.socket?.close();
    this.socket = null;
    this.state.connected = false;
  }

  private receive(data: string): void {
    let payload: { frame?: number; step?: number; png?: string; error?: string };
    try {
      payload = JSON.parse(data);
    } catch {
      this.state.lastError = "malformed preview message";
      this.emit();
      return;
    }
    if (payload.error !== undefined) {
      this.state.lastError = payload.error;
      this.emit();
      return;
    }
    if (payload.png === undefined || payload.frame === undefined) return;
    const image = base64ToBytes(payload.png);
    const size = readPngSize(image);
    if (
      this.expectedSize !== undefined &&
      (size.width !== this.expectedSize.width || size.height !== this.expectedSize.height)
    ) {
      this.state.lastError =
        `preview is ${size.width}x${size.height}, ` +
        `expected ${this.expectedSize.width}x${this.expectedSize.height}`;
      this.emit();
      return;
    }
    this.state.frameIndex = payload.frame;
    this.state.step = payload.step ?? null;
    this.state.image = image;
    this.state.imageSize = size;
    this.state.updatesReceived += 1;
    this.state.stale = false;
    this.state.lastError = null;
    this.armStaleTimer();
    this.emit();
  }

  private armStaleTimer(): void {
    if (this.staleTimer !== null) this.timers.clear(this.staleTimer);
    this.staleTimer = this.timers.set(() => {
      this.staleTimer = null;
      this.state.stale = true;
      this.emit();
    }, this.staleAfterMs);
  }

  private scheduleReconnect(): void {
    if (this.reconnectTimer !== null) return;
    this.reconnectAttempts += 1;
    const delay = Math.min(
      this.reconnectBaseMs * 2 ** (this.reconnectAttempts - 1),
      this.reconnectMaxMs,
    );
    this.reconnectTimer = this.timers.set(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }

  private emit(): void {
    this.onUpdate?.(this.snapshot());
  }
}
