/** The painting surface: a base keyframe plus replayable stroke lists. */

import { renderStroke, type BrushStroke } from "./brush.js";
import { cloneBuffer, createBuffer, type PixelBuffer } from "./pixels.js";

export interface SessionBinding {
  sessionId: string;
  keyframeIndex: number;
}

export interface FlattenResult {
  buffer: PixelBuffer;
  /** Linear pixel indices touched by any stroke during the replay. */
  touched: Set<number>;
}

export class CanvasDocument {
  readonly width: number;
  readonly height: number;
  /** The keyframe exactly as it came from the backend. */
  readonly basePng: Uint8Array;
  readonly binding: SessionBinding;
  readonly strokes: BrushStroke[] = [];
  readonly maskStrokes: BrushStroke[] = [];
  dirty = false;
  maskDirty = false;
  /** Bumped on every edit; lets the uploader detect edits made mid-flight. */
  revision = 0;

  private readonly base: PixelBuffer;

  constructor(basePng: Uint8Array, base: PixelBuffer, binding: SessionBinding) {
    this.basePng = basePng;
    this.base = base;
    this.binding = binding;
    this.width = base.width;
    this.height = base.height;
  }

  addStroke(stroke: BrushStroke): void {
    this.strokes.push(stroke);
    this.dirty = true;
    this.revision += 1;
  }

  addMaskStroke(stroke: BrushStroke): void {
    this.maskStrokes.push(stroke);
    this.maskDirty = true;
    this.revision += 1;
  }

  undoStroke(): void {
    if (this.strokes.pop()) {
      this.dirty = true;
      this.revision += 1;
    }
  }

  /** Deterministic replay of the stroke list over the base keyframe. */
  flatten(): FlattenResult {
    const buffer = cloneBuffer(this.base);
    const touched = new Set<number>();
    for (const stroke of this.strokes) {
      for (const index of renderStroke(buffer, stroke)) touched.add(index);
    }
    return { buffer, touched };
  }

  /** Mask replay: starts fully opaque (all kept), strokes carve or restore. */
  flattenMask(): FlattenResult {
    const buffer = createBuffer(this.width, this.height, [255, 255, 255, 255]);
    const touched = new Set<number>();
    for (const stroke of this.maskStrokes) {
      for (const index of renderStroke(buffer, stroke)) touched.add(index);
    }
    return { buffer, touched };
  }
}
