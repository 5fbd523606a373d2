// Screen <-> image coordinate mapping and crop-rectangle rules.

import type { Rect } from "./types.js";

export const MIN_CROP_PX = 4;

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Fit an image into a viewport, preserving aspect ratio and centering. */
export function fitTransform(
  imageW: number,
  imageH: number,
  viewW: number,
  viewH: number,
): ViewTransform {
  const scale = Math.min(viewW / imageW, viewH / imageH);
  return {
    scale,
    offsetX: (viewW - imageW * scale) / 2,
    offsetY: (viewH - imageH * scale) / 2,
  };
}

export function imageToScreen(t: ViewTransform, x: number, y: number): [number, number] {
  return [x * t.scale + t.offsetX, y * t.scale + t.offsetY];
}

export function screenToImage(t: ViewTransform, x: number, y: number): [number, number] {
  return [(x - t.offsetX) / t.scale, (y - t.offsetY) / t.scale];
}

/** Normalize a drag gesture (any corner order) into a positive-extent rect. */
export function dragToRect(x0: number, y0: number, x1: number, y1: number): Rect {
  return {
    x: Math.min(x0, x1),
    y: Math.min(y0, y1),
    w: Math.abs(x1 - x0),
    h: Math.abs(y1 - y0),
  };
}

/** Clamp a rect to the image so requests built from it are always valid. */
export function clampRectToImage(rect: Rect, imageW: number, imageH: number): Rect {
  const x0 = Math.min(Math.max(rect.x, 0), imageW);
  const y0 = Math.min(Math.max(rect.y, 0), imageH);
  const x1 = Math.min(Math.max(rect.x + rect.w, 0), imageW);
  const y1 = Math.min(Math.max(rect.y + rect.h, 0), imageH);
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}

export function isValidCrop(rect: Rect): boolean {
  return rect.w >= MIN_CROP_PX && rect.h >= MIN_CROP_PX;
}
