// Overlay drawing. The context is typed structurally so tests can record calls.

import { imageToScreen, type ViewTransform } from "./geometry.js";
import type { Detection, Rect } from "./types.js";

export interface OverlayContext {
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  measureText(text: string): { width: number };
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
}

const PALETTE = ["#e6553f", "#2f7de1", "#2fa84f", "#e0a93c", "#9c5fd4", "#2fb5b5"];

export function boxColor(classIndex: number): string {
  return PALETTE[classIndex % PALETTE.length];
}

export function drawDetections(
  ctx: OverlayContext,
  detections: Detection[],
  t: ViewTransform,
  viewW: number,
  viewH: number,
): void {
  ctx.clearRect(0, 0, viewW, viewH);
  ctx.lineWidth = 2;
  ctx.font = "12px sans-serif";
  for (const d of detections) {
    const [sx, sy] = imageToScreen(t, d.x, d.y);
    const sw = d.w * t.scale;
    const sh = d.h * t.scale;
    const color = boxColor(d.class_index);
    ctx.strokeStyle = color;
    ctx.strokeRect(sx, sy, sw, sh);
    const label = `${d.class_name} ${d.confidence.toFixed(2)}`;
    const labelW = ctx.measureText(label).width + 6;
    ctx.fillStyle = color;
    ctx.fillRect(sx, Math.max(sy - 16, 0), labelW, 16);
    ctx.fillStyle = "#ffffff";
    ctx.fillText(label, sx + 3, Math.max(sy - 4, 12));
  }
}

export function drawCropRect(ctx: OverlayContext, rect: Rect, t: ViewTransform): void {
  const [sx, sy] = imageToScreen(t, rect.x, rect.y);
  ctx.lineWidth = 1.5;
  ctx.strokeStyle = "#ffd23f";
  ctx.strokeRect(sx, sy, rect.w * t.scale, rect.h * t.scale);
}
