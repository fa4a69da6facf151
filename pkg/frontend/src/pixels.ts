/** Raw RGBA pixel buffers shared by the brush engine and the PNG codecs. */

export interface PixelBuffer {
  readonly width: number;
  readonly height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  readonly data: Uint8ClampedArray<ArrayBuffer>;
}

export type Rgb = readonly [number, number, number];

export function createBuffer(
  width: number,
  height: number,
  fill: readonly [number, number, number, number] = [0, 0, 0, 255],
): PixelBuffer {
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`invalid buffer size ${width}x${height}`);
  }
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < data.length; i += 4) {
    data[i] = fill[0];
    data[i + 1] = fill[1];
    data[i + 2] = fill[2];
    data[i + 3] = fill[3];
  }
  return { width, height, data };
}

export function cloneBuffer(buffer: PixelBuffer): PixelBuffer {
  return {
    width: buffer.width,
    height: buffer.height,
    data: new Uint8ClampedArray(buffer.data),
  };
}

export function buffersEqual(a: PixelBuffer, b: PixelBuffer): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i += 1) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}

/** Linear pixel indices (y * width + x) where any RGBA channel differs. */
export function differingPixels(a: PixelBuffer, b: PixelBuffer): Set<number> {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error("differingPixels needs equal-sized buffers");
  }
  const out = new Set<number>();
  for (let p = 0; p < a.width * a.height; p += 1) {
    const i = p * 4;
    if (
      a.data[i] !== b.data[i] ||
      a.data[i + 1] !== b.data[i + 1] ||
      a.data[i + 2] !== b.data[i + 2] ||
      a.data[i + 3] !== b.data[i + 3]
    ) {
      out.add(p);
    }
  }
  return out;
}
