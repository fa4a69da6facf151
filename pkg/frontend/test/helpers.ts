/** Shared test fixtures: a sync pngjs codec, base images, and mocks. */

import { PNG } from "pngjs";

import type { PngCodec } from "../src/codec.js";
import type { PixelBuffer } from "../src/pixels.js";
import type { Transport, TransportReply } from "../src/committer.js";
import type { SocketLike } from "../src/preview.js";

/** The pngjs codec is synchronous; narrow the interface so tests can use
 * the results without awaiting. */
export interface SyncPngCodec extends PngCodec {
  decode(bytes: Uint8Array): PixelBuffer;
  encode(buffer: PixelBuffer): Uint8Array;
}

export const nodeCodec: SyncPngCodec = {
  decode(bytes: Uint8Array): PixelBuffer {
    const png = PNG.sync.read(Buffer.from(bytes));
    return {
      width: png.width,
      height: png.height,
      data: new Uint8ClampedArray(png.data),
    };
  },
  encode(buffer: PixelBuffer): Uint8Array {
    const png = new PNG({ width: buffer.width, height: buffer.height });
    png.data = Buffer.from(buffer.data);
    return new Uint8Array(PNG.sync.write(png));
  },
};

/** A deterministic gradient test card with no fully saturated red pixel. */
export function gradientBuffer(width: number, height: number): PixelBuffer {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y += 1) {
    for (let x = 0; x < width; x += 1) {
      const i = (y * width + x) * 4;
      data[i] = (x * 3) % 200;
      data[i + 1] = (y * 5) % 251;
      data[i + 2] = (x + y) % 251;
      data[i + 3] = 255;
    }
  }
  return { width, height, data };
}

export interface RecordedPut {
  path: string;
  body: Uint8Array;
  at: number;
}

export class RecordingTransport implements Transport {
  readonly calls: RecordedPut[] = [];
  inFlight = 0;
  maxInFlight = 0;
  /** Optional per-call behavior; defaults to immediate success. */
  reply: (call: RecordedPut) => Promise<TransportReply> = async () => ({ ok: true, status: 200 });

  async put(path: string, body: Uint8Array): Promise<TransportReply> {
    const call = { path, body, at: Date.now() };
    this.calls.push(call);
    this.inFlight += 1;
    this.maxInFlight = Math.max(this.maxInFlight, this.inFlight);
    try {
      return await this.reply(call);
    } finally {
      this.inFlight -= 1;
    }
  }
}

export class MockSocket implements SocketLike {
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  readonly sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  /** Test-side controls. */
  open(): void {
    this.onopen?.();
  }

  push(payload: unknown): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }

  drop(): void {
    this.onclose?.();
  }
}

export function pngBase64(buffer: PixelBuffer): string {
  return Buffer.from(nodeCodec.encode(buffer)).toString("base64");
}
