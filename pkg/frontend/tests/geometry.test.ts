import { describe, expect, it } from "vitest";

import {
  MIN_CROP_PX,
  clampRectToImage,
  dragToRect,
  fitTransform,
  imageToScreen,
  isValidCrop,
  screenToImage,
} from "../dist/geometry.js";

describe("fitTransform", () => {
  it("fits a wide image against the viewport width", () => {
    const t = fitTransform(2000, 1000, 900, 640);
    expect(t.scale).toBeCloseTo(0.45, 10);
    expect(t.offsetX).toBe(0);
    expect(t.offsetY).toBeCloseTo((640 - 450) / 2, 10);
  });

  it("centers a tall image horizontally", () => {
    const t = fitTransform(500, 1000, 900, 640);
    expect(t.offsetY).toBe(0);
    expect(t.offsetX).toBeGreaterThan(0);
  });
});

describe("coordinate round trip", () => {
  it("screen -> image -> screen stays within 1 px over the viewport", () => {
    const t = fitTransform(1234, 987, 900, 640);
    for (let i = 0; i < 200; i++) {
      const sx = (i * 37) % 900;
      const sy = (i * 53) % 640;
      const [ix, iy] = screenToImage(t, sx, sy);
      const [bx, by] = imageToScreen(t, ix, iy);
      expect(Math.abs(bx - sx)).toBeLessThanOrEqual(1);
      expect(Math.abs(by - sy)).toBeLessThanOrEqual(1);
    }
  });

  it("image corners land on the fitted region", () => {
    const t = fitTransform(100, 50, 900, 640);
    expect(imageToScreen(t, 0, 0)).toEqual([t.offsetX, t.offsetY]);
    const [sx, sy] = imageToScreen(t, 100, 50);
    expect(sx).toBeCloseTo(t.offsetX + 100 * t.scale, 10);
    expect(sy).toBeCloseTo(t.offsetY + 50 * t.scale, 10);
  });
});

describe("dragToRect", () => {
  it("normalizes a backwards drag", () => {
    expect(dragToRect(50, 60, 10, 20)).toEqual({ x: 10, y: 20, w: 40, h: 40 });
  });
});

describe("clampRectToImage", () => {
  it("clamps a rect that spills outside", () => {
    const rect = clampRectToImage({ x: -10, y: 5, w: 30, h: 200 }, 100, 80);
    expect(rect).toEqual({ x: 0, y: 5, w: 20, h: 75 });
  });

  it("collapses a fully-outside rect to zero extent", () => {
    const rect = clampRectToImage({ x: 500, y: 500, w: 10, h: 10 }, 100, 80);
    expect(rect.w).toBe(0);
    expect(isValidCrop(rect)).toBe(false);
  });
});

describe("isValidCrop", () => {
  it("enforces the minimum drag size", () => {
    expect(isValidCrop({ x: 0, y: 0, w: MIN_CROP_PX, h: MIN_CROP_PX })).toBe(true);
    expect(isValidCrop({ x: 0, y: 0, w: MIN_CROP_PX - 1, h: 50 })).toBe(false);
  });
});
