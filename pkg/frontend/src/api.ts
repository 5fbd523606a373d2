// Thin typed client for the recognition service; fetch is injectable for tests.

import type {
  PredictCropResponse,
  RecognizeResponse,
  Rect,
  UploadResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok) {
    const err = body?.error ?? {};
    throw new ApiError(resp.status, err.code ?? "error", err.message ?? resp.statusText);
  }
  return body as T;
}

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    private readonly base: string = "",
  ) {}

  uploadImage(data: Blob | ArrayBuffer): Promise<UploadResponse> {
    return this.fetchFn(`${this.base}/api/images`, {
      method: "POST",
      body: data,
    }).then((r) => parseOrThrow<UploadResponse>(r));
  }

  recognize(imageId: string, confidence: number): Promise<RecognizeResponse> {
    const url = `${this.base}/api/images/${encodeURIComponent(imageId)}/recognize` +
      `?confidence=${confidence}`;
    return this.fetchFn(url, { method: "POST" })
      .then((r) => parseOrThrow<RecognizeResponse>(r));
  }

  predictCrop(imageId: string, rect: Rect, topK: number): Promise<PredictCropResponse> {
    const url = `${this.base}/api/images/${encodeURIComponent(imageId)}/predict-crop`;
    return this.fetchFn(url, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ x: rect.x, y: rect.y, w: rect.w, h: rect.h, top_k: topK }),
    }).then((r) => parseOrThrow<PredictCropResponse>(r));
  }

  classes(): Promise<string[]> {
    return this.fetchFn(`${this.base}/api/classes`).then((r) => parseOrThrow<string[]>(r));
  }
}
