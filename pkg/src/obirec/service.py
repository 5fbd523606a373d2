"""HTTP service for the interactive workflow: upload, recognize, tune, crop, classify.

Each uploaded image gets a session that caches the detector's raw feature
maps, so changing the confidence threshold only re-decodes the cached maps
instead of re-running the network. Sessions are in-memory with an idle TTL.
"""
from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .classify import predict_crop
from .detect import LetterboxTransform, detections_from_maps, letterbox
from .imageio import decode_image
from .network import LoadedNetwork, count_flops, count_params, forward
from .tensor import Tensor

DEFAULT_MAX_UPLOAD_BYTES = 16 * 1024 * 1024
DEFAULT_SESSION_TTL_SECONDS = 3600.0
DETECTOR_MODEL_NAME = "yolov3-tiny"
CLASSIFIER_MODEL_NAME = "mobilenet-v1"


@dataclass
class ImageSession:
    """One uploaded image plus its lazily computed detector cache."""

    image_id: str
    image: np.ndarray
    uploaded_at: float
    last_access: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    feature_maps: list[Tensor] | None = None
    transform: LetterboxTransform | None = None


class SessionStore:
    """Thread-safe id -> session map with idle-TTL expiry."""

    def __init__(self, ttl_seconds: float):
        self.ttl = ttl_seconds
        self._lock = threading.Lock()
        self._sessions: dict[str, ImageSession] = {}

    def create(self, image: np.ndarray) -> ImageSession:
        now = time.monotonic()
        session = ImageSession(uuid.uuid4().hex, image, now, now)
        with self._lock:
            self._purge(now)
            self._sessions[session.image_id] = session
        return session

    def get(self, image_id: str) -> ImageSession | None:
        now = time.monotonic()
        with self._lock:
            self._purge(now)
            session = self._sessions.get(image_id)
            if session is not None:
                session.last_access = now
            return session

    def _purge(self, now: float) -> None:
        dead = [k for k, s in self._sessions.items() if now - s.last_access > self.ttl]
        for k in dead:
            del self._sessions[k]


class CropBody(BaseModel):
    x: float
    y: float
    w: float
    h: float
    top_k: int = 5


def _fail(status: int, code: str, message: str):
    raise HTTPException(status_code=status, detail={"code": code, "message": message})


def _detection_payload(d) -> dict:
    x1, y1, _, _ = d.box.corners()
    return {
        "x": x1,
        "y": y1,
        "w": d.box.w,
        "h": d.box.h,
        "class_index": d.class_index,
        "class_name": d.class_name,
        "confidence": d.confidence,
    }


def create_app(
    detector: LoadedNetwork | None = None,
    classifier: LoadedNetwork | None = None,
    *,
    class_names: tuple[str, ...] = (),
    nms_threshold: float = 0.5,
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES,
    session_ttl_seconds: float = DEFAULT_SESSION_TTL_SECONDS,
    static_dir: str | Path | None = None,
    spool_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service; models may be absent, in which case their endpoints 503."""
    app = FastAPI(title="glyph recognition service")
    store = SessionStore(session_ttl_seconds)
    if not class_names and detector is not None:
        class_names = detector.class_names
    spool = Path(spool_dir) if spool_dir else None
    if spool:
        spool.mkdir(parents=True, exist_ok=True)

    @app.exception_handler(HTTPException)
    async def on_http_error(_request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content={"error": detail})

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(_request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "invalid_request", "message": str(exc.errors())}},
        )

    def _session_or_404(image_id: str) -> ImageSession:
        session = store.get(image_id)
        if session is None:
            _fail(404, "unknown_image", f"no session for image id {image_id!r}")
        return session

    @app.post("/api/images")
    async def upload_image(request: Request):
        body = await request.body()
        if len(body) > max_upload_bytes:
            _fail(413, "payload_too_large",
                  f"upload of {len(body)} bytes exceeds the {max_upload_bytes}-byte cap")
        try:
            image = decode_image(body)
        except ValueError as exc:
            _fail(400, "undecodable_image", str(exc))
        session = store.create(image)
        if spool:
            (spool / f"{session.image_id}.img").write_bytes(body)
        return {
            "image_id": session.image_id,
            "width": int(image.shape[1]),
            "height": int(image.shape[0]),
        }

    @app.post("/api/images/{image_id}/recognize")
    def recognize(image_id: str, confidence: float = 0.1):
        if not 0 <= confidence <= 1:
            _fail(422, "confidence_out_of_range",
                  f"confidence must be in [0, 1], got {confidence}")
        if detector is None:
            _fail(503, "model_not_loaded", "detector weights are not loaded")
        session = _session_or_404(image_id)
        with session.lock:
            if session.feature_maps is None:
                tensor, transform = letterbox(session.image, detector.spec.input_shape[1])
                session.feature_maps = forward(detector, tensor)
                session.transform = transform
            maps, transform = session.feature_maps, session.transform
        detections = detections_from_maps(detector, maps, transform, confidence, nms_threshold)
        return {
            "detections": [_detection_payload(d) for d in detections],
            "model": DETECTOR_MODEL_NAME,
            "confidence_used": confidence,
        }

    @app.post("/api/images/{image_id}/predict-crop")
    def crop_predict(image_id: str, body: CropBody):
        if classifier is None:
            _fail(503, "model_not_loaded", "classifier weights are not loaded")
        session = _session_or_404(image_id)
        top_k = min(max(body.top_k, 1), classifier.spec.num_classes)
        try:
            predictions = predict_crop(
                classifier, session.image, (body.x, body.y, body.w, body.h), top_k,
            )
        except ValueError as exc:
            _fail(422, "bad_rect", str(exc))
        return {
            "predictions": [
                {"class_index": p.class_index, "class_name": p.class_name,
                 "probability": p.probability}
                for p in predictions
            ],
            "model": CLASSIFIER_MODEL_NAME,
        }

    @app.get("/api/classes")
    def classes():
        return list(class_names)

    @app.get("/api/health")
    def health():
        params = 0
        flops = 0
        for net in (detector, classifier):
            if net is not None:
                params += count_params(net.spec)
                flops += count_flops(net.spec)
        return {
            "status": "ok",
            "models_loaded": detector is not None and classifier is not None,
            "params": params,
            "flops": flops,
        }

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
