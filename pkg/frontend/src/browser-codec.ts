/** Canvas-backed PNG codec for the browser build (async on both paths). */

import type { PngCodec } from "./codec.js";
import type { PixelBuffer } from "./pixels.js";

async function decode(bytes: Uint8Array): Promise<PixelBuffer> {
  const blob = new Blob([bytes as unknown as BlobPart], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  const canvas = new OffscreenCanvas(bitmap.width, bitmap.height);
  const context = canvas.getContext("2d")!;
  context.drawImage(bitmap, 0, 0);
  const image = context.getImageData(0, 0, bitmap.width, bitmap.height);
  bitmap.close();
  return { width: image.width, height: image.height, data: image.data };
}

async function encode(buffer: PixelBuffer): Promise<Uint8Array> {
  const canvas = new OffscreenCanvas(buffer.width, buffer.height);
  const context = canvas.getContext("2d")!;
  context.putImageData(new ImageData(buffer.data, buffer.width, buffer.height), 0, 0);
  const blob = await canvas.convertToBlob({ type: "image/png" });
  return new Uint8Array(await blob.arrayBuffer());
}

export const browserCodec: PngCodec = { decode, encode };
