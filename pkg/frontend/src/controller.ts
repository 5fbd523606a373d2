// Session controller: owns ViewState, talks to the API, pushes renders to hooks.
//
// All server interaction goes through exactly three endpoints (upload,
// recognize, predict-crop); everything else is derived client-side from the
// state object, so a view can always be rebuilt from it.

import { ApiClient } from "./api.js";
import { clampRectToImage, isValidCrop } from "./geometry.js";
import type { ClassPrediction, Detection, Rect, ViewState } from "./types.js";
import { initialState } from "./types.js";
import { RecognizeScheduler } from "./scheduler.js";

export interface ViewHooks {
  onImage(imageId: string, width: number, height: number): void;
  onDetections(detections: Detection[], confidence: number): void;
  onCropRect(rect: Rect | null): void;
  onPredictions(predictions: ClassPrediction[]): void;
  onError(message: string): void;
}

export class SessionController {
  readonly state: ViewState = initialState();
  private readonly scheduler: RecognizeScheduler;

  constructor(
    private readonly api: ApiClient,
    private readonly hooks: ViewHooks,
    debounceMs = 250,
  ) {
    this.scheduler = new RecognizeScheduler(
      (confidence) => this.recognize(confidence),
      debounceMs,
    );
  }

  get hasSession(): boolean {
    return this.state.imageId !== null;
  }

  async upload(data: Blob | ArrayBuffer): Promise<void> {
    try {
      const resp = await this.api.uploadImage(data);
      this.state.imageId = resp.image_id;
      this.state.imageWidth = resp.width;
      this.state.imageHeight = resp.height;
      this.state.detections = [];
      this.state.cropRect = null;
      this.state.cropPredictions = [];
      this.hooks.onImage(resp.image_id, resp.width, resp.height);
    } catch (err) {
      this.hooks.onError(`upload failed: ${(err as Error).message}`);
    }
  }

  /** "Recognize characters": immediate recognize at the current confidence. */
  recognizeNow(): void {
    if (!this.hasSession) {
      return;
    }
    this.scheduler.requestNow(this.state.confidence);
  }

  /** Slider movement: debounced, superseding any in-flight request. */
  setConfidence(confidence: number): void {
    this.state.confidence = confidence;
    if (this.hasSession) {
      this.scheduler.request(confidence);
    }
  }

  private async recognize(confidence: number): Promise<void> {
    if (this.state.imageId === null) {
      return;
    }
    try {
      const resp = await this.api.recognize(this.state.imageId, confidence);
      this.state.detections = resp.detections;
      this.hooks.onDetections(resp.detections, resp.confidence_used);
    } catch (err) {
      this.hooks.onError(`recognize failed: ${(err as Error).message}`);
    }
  }

  /** Drag finished: clamp to the image, enforce the minimum size, classify. */
  async cropAndPredict(rect: Rect, topK = 5): Promise<void> {
    if (this.state.imageId === null) {
      return;
    }
    const clamped = clampRectToImage(rect, this.state.imageWidth, this.state.imageHeight);
    if (!isValidCrop(clamped)) {
      this.hooks.onError("crop too small: draw at least a 4x4 px box");
      return;
    }
    this.state.cropRect = clamped;
    this.hooks.onCropRect(clamped);
    try {
      const resp = await this.api.predictCrop(this.state.imageId, clamped, topK);
      this.state.cropPredictions = resp.predictions;
      this.hooks.onPredictions(resp.predictions);
    } catch (err) {
      this.hooks.onError(`predict-crop failed: ${(err as Error).message}`);
    }
  }
}
