"""Second-stage recognition: classify a user-cropped region of the original image."""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from .detect import bilinear_resize
from .network import LoadedNetwork, forward
from .tensor import Tensor

MIN_CROP_PX = 4


@dataclass(frozen=True)
class ClassPrediction:
    class_index: int
    class_name: str
    probability: float


def _clip_rect(rect: tuple[float, float, float, float], width: int, height: int):
    """Intersect a top-left (x, y, w, h) rect with the image; None when disjoint."""
    x, y, w, h = rect
    x0 = max(0, floor(x))
    y0 = max(0, floor(y))
    x1 = min(width, ceil(x + w))
    y1 = min(height, ceil(y + h))
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1, y1


def preprocess_crop(
    image: np.ndarray,
    rect: tuple[float, float, float, float],
    target: int = 224,
) -> Tensor:
    """Crop, resize to target x target (aspect ratio not preserved), normalize to [-1, 1]."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) raster, got shape {img.shape}")
    _, _, w, h = rect
    if w < MIN_CROP_PX or h < MIN_CROP_PX:
        raise ValueError(f"crop must be at least {MIN_CROP_PX}x{MIN_CROP_PX} px, got {w}x{h}")
    clipped = _clip_rect(rect, img.shape[1], img.shape[0])
    if clipped is None:
        raise ValueError(f"crop rect {rect} does not intersect the {img.shape[1]}x{img.shape[0]} image")
    x0, y0, x1, y1 = clipped
    crop = img[y0:y1, x0:x1].astype(np.float32) / 255.0
    resized = bilinear_resize(crop, target, target)
    return Tensor((resized * 2.0 - 1.0).transpose(2, 0, 1))


def predict_crop(
    net: LoadedNetwork,
    image: np.ndarray,
    rect: tuple[float, float, float, float],
    top_k: int = 5,
) -> list[ClassPrediction]:
    """Top-k class probabilities for a cropped region, descending (ties: lower index)."""
    if not net.spec.is_classifier:
        raise ValueError("network is not a classifier")
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    tensor = preprocess_crop(image, rect, target=net.spec.input_shape[1])
    probs = forward(net, tensor)[0].flat()
    k = min(top_k, len(probs))
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))[:k]
    names = net.class_names
    return [
        ClassPrediction(i, names[i] if names else str(i), float(probs[i]))
        for i in order
    ]
