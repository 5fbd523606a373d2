// Wire shapes of the recognition service JSON API.

export interface Detection {
  x: number; // top-left, original-image pixels
  y: number;
  w: number;
  h: number;
  class_index: number;
  class_name: string;
  confidence: number;
}

export interface RecognizeResponse {
  detections: Detection[];
  model: string;
  confidence_used: number;
}

export interface ClassPrediction {
  class_index: number;
  class_name: string;
  probability: number;
}

export interface PredictCropResponse {
  predictions: ClassPrediction[];
  model: string;
}

export interface UploadResponse {
  image_id: string;
  width: number;
  height: number;
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface ViewState {
  imageId: string | null;
  imageWidth: number;
  imageHeight: number;
  confidence: number;
  detections: Detection[];
  cropRect: Rect | null;
  cropPredictions: ClassPrediction[];
}

export function initialState(): ViewState {
  return {
    imageId: null,
    imageWidth: 0,
    imageHeight: 0,
    confidence: 0.1,
    detections: [],
    cropRect: null,
    cropPredictions: [],
  };
}
