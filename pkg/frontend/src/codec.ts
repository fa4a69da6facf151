/** PNG codec seam plus tiny header/byte helpers.
 *
 * The studio logic only touches raw pixel buffers; how PNG bytes are
 * produced is injected.  The browser build uses canvas APIs (async), the
 * test suite uses pngjs (sync) — both satisfy this interface.
 */

import type { PixelBuffer } from "./pixels.js";

export interface PngCodec {
  decode(bytes: Uint8Array): PixelBuffer | Promise<PixelBuffer>;
  encode(buffer: PixelBuffer): Uint8Array | Promise<Uint8Array>;
}

const PNG_SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

/** Reads width/height from the IHDR chunk without decoding the image. */
export function readPngSize(bytes: Uint8Array): { width: number; height: number } {
  if (bytes.length < 24 || PNG_SIGNATURE.some((value, i) => bytes[i] !== value)) {
    throw new Error("not a PNG");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  return { width: view.getUint32(16), height: view.getUint32(20) };
}

export function bytesEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i += 1) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}

/** base64 -> bytes; works in browsers and node (both expose atob). */
export function base64ToBytes(data: string): Uint8Array {
  const raw = atob(data);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i += 1) out[i] = raw.charCodeAt(i);
  return out;
}
