/** Round stamped brush with a hardness falloff.
 *
 * A stroke is replayed by stamping a radial footprint at fixed spacing
 * along its polyline.  Everything is plain arithmetic over the stroke
 * fields, so replaying the same stroke list over the same base buffer is
 * pixel-identical every time.
 */

import type { PixelBuffer, Rgb } from "./pixels.js";

export interface StrokePoint {
  x: number;
  y: number;
}

export interface BrushStroke {
  points: StrokePoint[];
  color: Rgb;
  /** Stamp radius in pixels. */
  radius: number;
  /** 0..1 source-over alpha for the whole stroke. */
  opacity: number;
  /** 0..1; the fraction of the radius painted at full strength. */
  hardness: number;
}

export function makeStroke(
  points: StrokePoint[],
  color: Rgb,
  radius: number,
  opacity = 1.0,
  hardness = 1.0,
): BrushStroke {
  if (points.length === 0) throw new Error("a stroke needs at least one point");
  if (!(radius > 0)) throw new Error(`radius must be > 0, got ${radius}`);
  if (!(opacity >= 0 && opacity <= 1)) throw new Error(`opacity must be in [0, 1]`);
  if (!(hardness >= 0 && hardness <= 1)) throw new Error(`hardness must be in [0, 1]`);
  return { points: points.map((p) => ({ x: p.x, y: p.y })), color, radius, opacity, hardness };
}

/** Distance between consecutive stamps along the path. */
export function stampSpacing(radius: number): number {
  return Math.max(0.5, radius / 4);
}

/** Full strength inside hardness*radius, linear falloff to zero at radius. */
export function coverageAt(distance: number, radius: number, hardness: number): number {
  if (distance > radius) return 0;
  const core = hardness * radius;
  if (distance <= core) return 1;
  return (radius - distance) / (radius - core);
}

/** Stamp centers along the polyline: every point, plus interpolated stamps. */
export function stampCenters(stroke: BrushStroke): StrokePoint[] {
  const spacing = stampSpacing(stroke.radius);
  const centers: StrokePoint[] = [{ ...stroke.points[0] }];
  let carried = 0;
  for (let i = 1; i < stroke.points.length; i += 1) {
    const a = stroke.points[i - 1];
    const b = stroke.points[i];
    const length = Math.hypot(b.x - a.x, b.y - a.y);
    if (length === 0) continue;
    let travelled = spacing - carried;
    while (travelled <= length) {
      const t = travelled / length;
      centers.push({ x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y) });
      travelled += spacing;
    }
    carried = length - (travelled - spacing);
  }
  const last = stroke.points[stroke.points.length - 1];
  const tail = centers[centers.length - 1];
  if (tail.x !== last.x || tail.y !== last.y) centers.push({ ...last });
  return centers;
}

function stamp(
  buffer: PixelBuffer,
  cx: number,
  cy: number,
  stroke: BrushStroke,
  touched: Set<number>,
): void {
  const { width, height, data } = buffer;
  const r = stroke.radius;
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(width - 1, Math.ceil(cx + r));
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(height - 1, Math.ceil(cy + r));
  for (let y = y0; y <= y1; y += 1) {
    for (let x = x0; x <= x1; x += 1) {
      const coverage = coverageAt(Math.hypot(x - cx, y - cy), r, stroke.hardness);
      const alpha = stroke.opacity * coverage;
      if (alpha <= 0) continue;
      const i = (y * width + x) * 4;
      data[i] = stroke.color[0] * alpha + data[i] * (1 - alpha);
      data[i + 1] = stroke.color[1] * alpha + data[i + 1] * (1 - alpha);
      data[i + 2] = stroke.color[2] * alpha + data[i + 2] * (1 - alpha);
      data[i + 3] = 255;
      touched.add(y * width + x);
    }
  }
}

/** Renders the stroke in place; returns the linear indices it painted. */
export function renderStroke(buffer: PixelBuffer, stroke: BrushStroke): Set<number> {
  const touched = new Set<number>();
  for (const center of stampCenters(stroke)) {
    stamp(buffer, center.x, center.y, stroke, touched);
  }
  return touched;
}
