import { describe, expect, it } from "vitest";

import { coverageAt, makeStroke, renderStroke, stampCenters } from "../src/brush.js";
import { buffersEqual, cloneBuffer, createBuffer, differingPixels } from "../src/pixels.js";

describe("coverage profile", () => {
  it("is full inside the hard core and zero beyond the radius", () => {
    expect(coverageAt(0, 10, 1)).toBe(1);
    expect(coverageAt(10, 10, 1)).toBe(1);
    expect(coverageAt(10.01, 10, 1)).toBe(0);
    expect(coverageAt(5, 10, 0.5)).toBe(1);
    expect(coverageAt(10, 10, 0.5)).toBe(0);
  });

  it("falls off linearly between the core and the rim", () => {
    expect(coverageAt(7.5, 10, 0.5)).toBeCloseTo(0.5, 12);
    let previous = 1;
    for (let d = 5; d <= 10; d += 0.5) {
      const value = coverageAt(d, 10, 0.5);
      expect(value).toBeLessThanOrEqual(previous);
      previous = value;
    }
  });
});

describe("stamp placement", () => {
  it("starts and ends exactly on the path endpoints", () => {
    const stroke = makeStroke([{ x: 2, y: 2 }, { x: 22, y: 2 }], [255, 0, 0], 4);
    const centers = stampCenters(stroke);
    expect(centers[0]).toEqual({ x: 2, y: 2 });
    expect(centers[centers.length - 1]).toEqual({ x: 22, y: 2 });
  });

  it("spaces stamps densely enough to leave no gaps", () => {
    const stroke = makeStroke([{ x: 0, y: 0 }, { x: 30, y: 0 }], [255, 0, 0], 4);
    const centers = stampCenters(stroke);
    for (let i = 1; i < centers.length; i += 1) {
      const gap = Math.hypot(
        centers[i].x - centers[i - 1].x,
        centers[i].y - centers[i - 1].y,
      );
      expect(gap).toBeLessThanOrEqual(1 + 1e-9);
    }
  });

  it("collapses a single point to one stamp", () => {
    const stroke = makeStroke([{ x: 5, y: 5 }], [255, 0, 0], 3);
    expect(stampCenters(stroke)).toEqual([{ x: 5, y: 5 }]);
  });
});

describe("renderStroke", () => {
  it("paints exactly the pixels within the radius for a hard dot", () => {
    const buffer = createBuffer(21, 21, [10, 20, 30, 255]);
    const stroke = makeStroke([{ x: 10, y: 10 }], [255, 0, 0], 5, 1, 1);
    const touched = renderStroke(buffer, stroke);
    for (let y = 0; y < 21; y += 1) {
      for (let x = 0; x < 21; x += 1) {
        const inside = Math.hypot(x - 10, y - 10) <= 5;
        expect(touched.has(y * 21 + x)).toBe(inside);
      }
    }
  });

  it("writes the pure stroke color at full opacity and hardness", () => {
    const buffer = createBuffer(16, 16, [10, 20, 30, 255]);
    const touched = renderStroke(buffer, makeStroke([{ x: 8, y: 8 }], [255, 0, 0], 4));
    for (const index of touched) {
      expect([...buffer.data.slice(index * 4, index * 4 + 4)]).toEqual([255, 0, 0, 255]);
    }
  });

  it("blends source-over at fractional opacity", () => {
    const buffer = createBuffer(9, 9, [100, 100, 100, 255]);
    renderStroke(buffer, makeStroke([{ x: 4, y: 4 }], [200, 0, 0], 2, 0.5, 1));
    const center = (4 * 9 + 4) * 4;
    expect(buffer.data[center]).toBe(150);
    expect(buffer.data[center + 1]).toBe(50);
    expect(buffer.data[center + 2]).toBe(50);
  });

  it("touches only stroked pixels on the base image", () => {
    const buffer = createBuffer(32, 32, [0, 80, 160, 255]);
    const reference = cloneBuffer(buffer);
    const stroke = makeStroke([{ x: 4, y: 4 }, { x: 27, y: 20 }], [255, 0, 0], 3);
    const touched = renderStroke(buffer, stroke);
    expect(differingPixels(buffer, reference)).toEqual(touched);
  });

  it("is deterministic across replays", () => {
    const stroke = makeStroke(
      [{ x: 3.3, y: 7.1 }, { x: 20.6, y: 12.9 }, { x: 11.2, y: 25.4 }],
      [30, 200, 90],
      4.5,
      0.7,
      0.4,
    );
    const first = createBuffer(32, 32, [50, 50, 50, 255]);
    const second = createBuffer(32, 32, [50, 50, 50, 255]);
    renderStroke(first, stroke);
    renderStroke(second, stroke);
    expect(buffersEqual(first, second)).toBe(true);
  });

  it("rejects malformed strokes", () => {
    expect(() => makeStroke([], [0, 0, 0], 3)).toThrow();
    expect(() => makeStroke([{ x: 0, y: 0 }], [0, 0, 0], 0)).toThrow();
    expect(() => makeStroke([{ x: 0, y: 0 }], [0, 0, 0], 3, 2)).toThrow();
    expect(() => makeStroke([{ x: 0, y: 0 }], [0, 0, 0], 3, 1, -1)).toThrow();
  });
});
