"""Grid-output decoding, IoU, non-maximum suppression, and image-space coordinates.

Boxes live in two spaces: network-input pixels right after decoding, and
original-image pixels after ``unletterbox``. Centers use (x, y, w, h) with
x to the right and y down.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import LoadedNetwork, forward
from .tensor import Tensor

MIN_EXTENT = 1e-6  # box extents never collapse to zero, even after clamping


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle: center (x, y) plus extents, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extents must be positive, got w={self.w}, h={self.h}")

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x - self.w / 2, self.y - self.h / 2,
                self.x + self.w / 2, self.y + self.h / 2)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, max(x2 - x1, MIN_EXTENT), max(y2 - y1, MIN_EXTENT))


@dataclass(frozen=True)
class Detection:
    box: BBox
    class_index: int
    class_name: str
    confidence: float

    def __post_init__(self):
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class LetterboxTransform:
    """Forward mapping original -> network input: scale then shift by the pads."""

    scale: float
    pad_x: int
    pad_y: int
    width: int
    height: int


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an (H, W, C) float array with half-pixel-centered bilinear sampling."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).astype(img.dtype)[:, None, None]
    fx = (xs - x0).astype(img.dtype)[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def letterbox(image: np.ndarray, target: int) -> tuple[Tensor, LetterboxTransform]:
    """Aspect-preserving resize onto a target x target canvas padded with 0.5 gray.

    Accepts an (H, W, 3) raster, uint8 or float in [0, 255]; the returned
    tensor holds [0, 1] values in (C, H, W) order.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a nonempty (H, W, 3) raster, got shape {img.shape}")
    h, w = img.shape[:2]
    scale = min(target / w, target / h)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    resized = bilinear_resize(img.astype(np.float32) / 255.0, new_h, new_w)
    canvas = np.full((target, target, 3), 0.5, dtype=np.float32)
    pad_x = (target - new_w) // 2
    pad_y = (target - new_h) // 2
    canvas[pad_y:pad_y + new_h, pad_x:pad_x + new_w] = resized
    return Tensor(canvas.transpose(2, 0, 1)), LetterboxTransform(scale, pad_x, pad_y, w, h)


def decode_yolo(
    feature_map: Tensor,
    anchors: list[tuple[float, float]],
    num_classes: int,
    grid: int,
    input_extent: int,
    conf_threshold: float,
    class_names: tuple[str, ...] = (),
) -> list[Detection]:
    """Decode one raw grid map into network-input-space detections.

    Per cell (i, j) and anchor b: center = (sigmoid(t) + cell index) * cell
    size, extent = anchor * exp(t); score = sigmoid(objectness) * best
    per-class sigmoid, one detection per (cell, anchor) at the argmax class.
    """
    n_anchors = len(anchors)
    per = num_classes + 5
    if feature_map.channels != n_anchors * per:
        raise ValueError(
            f"feature map has {feature_map.channels} channels, expected "
            f"{n_anchors}x({num_classes}+5) = {n_anchors * per}"
        )
    if feature_map.height != grid or feature_map.width != grid:
        raise ValueError(f"feature map extent {feature_map.shape} != grid {grid}")
    fm = feature_map.data.reshape(n_anchors, per, grid, grid).astype(np.float64)
    cell = input_extent / grid
    with np.errstate(over="ignore"):
        sig = lambda t: 1.0 / (1.0 + np.exp(-t))
        bx = (sig(fm[:, 0]) + np.arange(grid)[None, None, :]) * cell
        by = (sig(fm[:, 1]) + np.arange(grid)[None, :, None]) * cell
        aw = np.array([a[0] for a in anchors], dtype=np.float64)[:, None, None]
        ah = np.array([a[1] for a in anchors], dtype=np.float64)[:, None, None]
        bw = aw * np.exp(np.clip(fm[:, 2], -50, 50))
        bh = ah * np.exp(np.clip(fm[:, 3], -50, 50))
        objness = sig(fm[:, 4])
        class_probs = sig(fm[:, 5:])
    best_class = class_probs.argmax(axis=1)
    best_prob = class_probs.max(axis=1)
    score = objness * best_prob
    detections = []
    for b, i, j in np.argwhere(score >= conf_threshold):
        ci = int(best_class[b, i, j])
        name = class_names[ci] if class_names else str(ci)
        detections.append(Detection(
            box=BBox(float(bx[b, i, j]), float(by[b, i, j]),
                     float(bw[b, i, j]), float(bh[b, i, j])),
            class_index=ci,
            class_name=name,
            confidence=float(score[b, i, j]),
        ))
    return detections


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint.

    All areas derive from the same corner arithmetic so identical boxes give
    exactly 1.0.
    """
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return min(inter / union, 1.0)


def nms(detections: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy per-class suppression.

    Candidates are visited by confidence descending (ties: lower class index,
    then earlier input position); a candidate is dropped when it overlaps an
    already-kept box of the same class with IoU above the threshold.
    """
    if not 0 <= iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].confidence, detections[i].class_index, i))
    kept_by_class: dict[int, list[Detection]] = {}
    result = []
    for i in order:
        d = detections[i]
        kept = kept_by_class.setdefault(d.class_index, [])
        if all(iou(d.box, k.box) <= iou_threshold for k in kept):
            kept.append(d)
            result.append(d)
    return result


def unletterbox(d: Detection, t: LetterboxTransform) -> Detection:
    """Map a network-input-space detection back to original-image pixels, clamped."""
    x = (d.box.x - t.pad_x) / t.scale
    y = (d.box.y - t.pad_y) / t.scale
    w = d.box.w / t.scale
    h = d.box.h / t.scale
    x1 = min(max(x - w / 2, 0.0), t.width)
    y1 = min(max(y - h / 2, 0.0), t.height)
    x2 = min(max(x + w / 2, 0.0), t.width)
    y2 = min(max(y + h / 2, 0.0), t.height)
    return replace(d, box=BBox.from_corners(x1, y1, x2, y2))


def decode_maps(
    net: LoadedNetwork,
    maps: list[Tensor],
    conf_threshold: float,
) -> list[Detection]:
    """Decode every detection-scale feature map of a detector, merged, un-suppressed."""
    spec = net.spec
    input_extent = spec.input_shape[1]
    detections: list[Detection] = []
    for fm, (_, mask) in zip(maps, spec.yolo_layers()):
        anchors = [spec.anchors[m] for m in mask]
        detections.extend(decode_yolo(
            fm, anchors, spec.num_classes, fm.height, input_extent,
            conf_threshold, net.class_names,
        ))
    return detections


def detections_from_maps(
    net: LoadedNetwork,
    maps: list[Tensor],
    transform: LetterboxTransform,
    conf_threshold: float,
    iou_threshold: float,
) -> list[Detection]:
    """Decode, suppress, and map cached feature maps into original-image detections."""
    dets = decode_maps(net, maps, conf_threshold)
    dets = nms(dets, iou_threshold)
    dets = [unletterbox(d, transform) for d in dets]
    dets.sort(key=lambda d: -d.confidence)
    return dets


def detect(
    image: np.ndarray,
    net: LoadedNetwork,
    conf_threshold: float = 0.1,
    iou_threshold: float = 0.5,
) -> list[Detection]:
    """Full single-image pipeline: letterbox, forward, decode both scales, NMS, unmap."""
    if not net.spec.is_detector:
        raise ValueError("network is not a detector")
    tensor, transform = letterbox(image, net.spec.input_shape[1])
    maps = forward(net, tensor)
    return detections_from_maps(net, maps, transform, conf_threshold, iou_threshold)
