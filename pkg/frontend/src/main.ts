// DOM wiring: binds the upload input, confidence slider, canvases, and lists
// to a SessionController. Everything stateful lives in the controller.

import { ApiClient } from "./api.js";
import { SessionController, type ViewHooks } from "./controller.js";
import { dragToRect, fitTransform, screenToImage, type ViewTransform } from "./geometry.js";
import { drawCropRect, drawDetections } from "./overlay.js";
import type { ClassPrediction, Detection, Rect } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const fileInput = $<HTMLInputElement>("file-input");
const recognizeBtn = $<HTMLButtonElement>("recognize-btn");
const slider = $<HTMLInputElement>("confidence-slider");
const sliderValue = $<HTMLSpanElement>("confidence-value");
const countLabel = $<HTMLSpanElement>("detection-count");
const statusLabel = $<HTMLSpanElement>("status");
const imageCanvas = $<HTMLCanvasElement>("image-canvas");
const overlayCanvas = $<HTMLCanvasElement>("overlay-canvas");
const predictionList = $<HTMLOListElement>("prediction-list");

let transform: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
let bitmap: ImageBitmap | null = null;
let lastDetections: Detection[] = [];
let dragStart: [number, number] | null = null;

function overlayCtx(): CanvasRenderingContext2D {
  return overlayCanvas.getContext("2d")!;
}

function redrawImage(): void {
  const ctx = imageCanvas.getContext("2d")!;
  ctx.clearRect(0, 0, imageCanvas.width, imageCanvas.height);
  if (!bitmap) return;
  ctx.drawImage(
    bitmap,
    transform.offsetX,
    transform.offsetY,
    bitmap.width * transform.scale,
    bitmap.height * transform.scale,
  );
}

function redrawOverlay(rect: Rect | null): void {
  drawDetections(overlayCtx(), lastDetections, transform, overlayCanvas.width, overlayCanvas.height);
  if (rect) drawCropRect(overlayCtx(), rect, transform);
}

function setControlsEnabled(enabled: boolean): void {
  recognizeBtn.disabled = !enabled;
  slider.disabled = !enabled;
}

const hooks: ViewHooks = {
  onImage(_imageId, width, height) {
    transform = fitTransform(width, height, imageCanvas.width, imageCanvas.height);
    lastDetections = [];
    predictionList.replaceChildren();
    countLabel.textContent = "0 detections";
    statusLabel.textContent = "image ready";
    setControlsEnabled(true);
    redrawImage();
    redrawOverlay(null);
  },
  onDetections(detections, confidence) {
    lastDetections = detections;
    countLabel.textContent = `${detections.length} detections @ ${confidence.toFixed(2)}`;
    redrawOverlay(controller.state.cropRect);
  },
  onCropRect(rect) {
    redrawOverlay(rect);
  },
  onPredictions(predictions: ClassPrediction[]) {
    predictionList.replaceChildren(
      ...predictions.map((p) => {
        const li = document.createElement("li");
        li.textContent = `${p.class_name} ${(p.probability * 100).toFixed(1)}%`;
        return li;
      }),
    );
  },
  onError(message) {
    statusLabel.textContent = message;
  },
};

const controller = new SessionController(new ApiClient(), hooks);
setControlsEnabled(false); // no session yet: upload panel only

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  statusLabel.textContent = "uploading...";
  bitmap = await createImageBitmap(file);
  await controller.upload(file);
});

recognizeBtn.addEventListener("click", () => {
  statusLabel.textContent = "recognizing...";
  controller.recognizeNow();
});

slider.addEventListener("input", () => {
  const value = Number(slider.value);
  sliderValue.textContent = value.toFixed(2);
  controller.setConfidence(value);
});

overlayCanvas.addEventListener("mousedown", (ev) => {
  const bounds = overlayCanvas.getBoundingClientRect();
  dragStart = [ev.clientX - bounds.left, ev.clientY - bounds.top];
});

overlayCanvas.addEventListener("mousemove", (ev) => {
  if (!dragStart) return;
  const bounds = overlayCanvas.getBoundingClientRect();
  const [x0, y0] = screenToImage(transform, dragStart[0], dragStart[1]);
  const [x1, y1] = screenToImage(
    transform,
    ev.clientX - bounds.left,
    ev.clientY - bounds.top,
  );
  redrawOverlay(dragToRect(x0, y0, x1, y1));
});

overlayCanvas.addEventListener("mouseup", async (ev) => {
  if (!dragStart) return;
  const bounds = overlayCanvas.getBoundingClientRect();
  const [x0, y0] = screenToImage(transform, dragStart[0], dragStart[1]);
  const [x1, y1] = screenToImage(
    transform,
    ev.clientX - bounds.left,
    ev.clientY - bounds.top,
  );
  dragStart = null;
  statusLabel.textContent = "classifying crop...";
  await controller.cropAndPredict(dragToRect(x0, y0, x1, y1));
  statusLabel.textContent = "done";
});
