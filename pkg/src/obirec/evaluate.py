"""Dataset evaluation: greedy matching, precision/recall/F1, AP/mAP, model accounting.

Annotations follow the one-text-file-per-image convention: each line is
``class_index cx cy w h`` with coordinates normalized to [0, 1] relative to
the image extent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .detect import BBox, Detection, iou
from .imageio import load_image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class GroundTruthBox:
    """One annotated box: class plus center/extent normalized to the image."""

    class_index: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.class_index < 0:
            raise ValueError(f"class_index must be >= 0, got {self.class_index}")
        if not (0 <= self.cx <= 1 and 0 <= self.cy <= 1 and 0 < self.w <= 1 and 0 < self.h <= 1):
            raise ValueError(f"normalized coordinates out of range: {self}")

    def to_bbox(self, width: int, height: int) -> BBox:
        return BBox(self.cx * width, self.cy * height, self.w * width, self.h * height)


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int], ...]  # (prediction index, ground-truth index)


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    per_class_counts: dict[int, tuple[int, int, int]]
    per_class_ap: dict[int, float]
    mean_ap: float
    mean_tp_confidence: float
    iou_threshold: float
    images_evaluated: int
    skipped_images: tuple[tuple[str, str], ...]  # (image name, reason)
    params: int = 0
    flops: int = 0
    model_volume_bytes: int = 0
    pr_points: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float,
    width: int,
    height: int,
) -> MatchResult:
    """Greedy same-class matching in confidence order.

    Each prediction takes the unmatched ground truth of its class with the
    highest IoU at or above the threshold (ties: lowest ground-truth index);
    everything else is a false positive, leftover truths are false negatives.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    gt_boxes = [g.to_bbox(width, height) for g in gts]
    taken = [False] * len(gts)
    pairs = []
    for pi in order:
        p = preds[pi]
        best_gi = -1
        best_iou = 0.0
        for gi, g in enumerate(gts):
            if taken[gi] or g.class_index != p.class_index:
                continue
            overlap = iou(p.box, gt_boxes[gi])
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_gi = gi
        if best_gi >= 0:
            taken[best_gi] = True
            pairs.append((pi, best_gi))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp, pairs=tuple(pairs))


def precision(tp: int, fp: int) -> float:
    return tp / (tp + fp) if tp + fp else 0.0


def recall(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn else 0.0


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def pr_curve(
    records: Sequence[tuple[float, bool]],
    total_gt: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Recall and monotone (enveloped) precision along the confidence-sorted record list.

    ``records`` is (confidence, is_true_positive) already produced by matching.
    """
    if total_gt == 0 or not records:
        return np.zeros(0), np.zeros(0)
    flags = np.array([tp for _, tp in sorted(records, key=lambda r: -r[0])], dtype=bool)
    cum_tp = np.cumsum(flags)
    cum_fp = np.cumsum(~flags)
    recalls = cum_tp / total_gt
    precisions = cum_tp / (cum_tp + cum_fp)
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    return recalls, envelope


def average_precision(records: Sequence[tuple[float, bool]], total_gt: int) -> float:
    """Area under the all-point-interpolated precision/recall curve.

    Equals the mean of enveloped precision over true-positive hits, which
    keeps the perfect-detector case exactly 1.0.
    """
    if total_gt == 0:
        return 0.0
    recalls, envelope = pr_curve(records, total_gt)
    if len(recalls) == 0:
        return 0.0
    flags = np.array([tp for _, tp in sorted(records, key=lambda r: -r[0])], dtype=bool)
    return float(envelope[flags].sum() / total_gt)


def _class_records(
    per_image: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox], int, int]],
    class_index: int,
    iou_threshold: float,
) -> tuple[list[tuple[float, bool]], int]:
    """(confidence, matched) records plus ground-truth count for one class."""
    entries = []  # (confidence, image index, bbox)
    gt_by_image: dict[int, list[BBox]] = {}
    total_gt = 0
    for img_i, (preds, gts, width, height) in enumerate(per_image):
        for p in preds:
            if p.class_index == class_index:
                entries.append((p.confidence, img_i, p.box))
        boxes = [g.to_bbox(width, height) for g in gts if g.class_index == class_index]
        gt_by_image[img_i] = boxes
        total_gt += len(boxes)
    entries.sort(key=lambda e: -e[0])
    taken: dict[int, list[bool]] = {i: [False] * len(b) for i, b in gt_by_image.items()}
    records = []
    for conf, img_i, box in entries:
        best_gi = -1
        best_iou = 0.0
        for gi, g in enumerate(gt_by_image[img_i]):
            if taken[img_i][gi]:
                continue
            overlap = iou(box, g)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_gi = gi
        if best_gi >= 0:
            taken[img_i][best_gi] = True
            records.append((conf, True))
        else:
            records.append((conf, False))
    return records, total_gt


def map_at_iou(
    per_image: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox], int, int]],
    iou_threshold: float,
) -> tuple[float, dict[int, float], dict[int, tuple[np.ndarray, np.ndarray]]]:
    """Unweighted mean AP over classes with at least one ground truth, with PR curves."""
    classes = sorted({g.class_index for _, gts, _, _ in per_image for g in gts})
    per_class = {}
    curves = {}
    for c in classes:
        records, total_gt = _class_records(per_image, c, iou_threshold)
        per_class[c] = average_precision(records, total_gt)
        curves[c] = pr_curve(records, total_gt)
    mean = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return mean, per_class, curves


def read_annotations(path: str | Path) -> list[GroundTruthBox]:
    """Parse one annotation file; raises ValueError on any malformed line."""
    boxes = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        try:
            boxes.append(GroundTruthBox(int(fields[0]), *(float(f) for f in fields[1:])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return boxes


def list_samples(images_dir: str | Path) -> list[Path]:
    root = Path(images_dir)
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def evaluate_dataset(
    detect_fn: Callable[[np.ndarray], list[Detection]],
    images_dir: str | Path,
    iou_threshold: float = 0.5,
    params: int = 0,
    flops: int = 0,
    model_volume_bytes: int = 0,
) -> MetricsReport:
    """Run a detector over every annotated image under ``images_dir`` and aggregate.

    Images without a readable annotation file are skipped (with a reason) and
    evaluation continues.
    """
    per_image = []
    tp_confidences: list[float] = []
    skipped: list[tuple[str, str]] = []
    agg = {"tp": 0, "fp": 0, "fn": 0}
    per_class: dict[int, list[int]] = {}
    for image_path in list_samples(images_dir):
        ann_path = image_path.with_suffix(".txt")
        if not ann_path.exists():
            skipped.append((image_path.name, "missing annotation file"))
            continue
        try:
            gts = read_annotations(ann_path)
        except ValueError as exc:
            skipped.append((image_path.name, f"bad annotation: {exc}"))
            continue
        image = load_image(image_path)
        height, width = image.shape[:2]
        preds = detect_fn(image)
        result = match_detections(preds, gts, iou_threshold, width, height)
        agg["tp"] += result.tp
        agg["fp"] += result.fp
        agg["fn"] += result.fn
        matched_preds = {pi for pi, _ in result.pairs}
        tp_confidences.extend(preds[pi].confidence for pi in sorted(matched_preds))
        for c in sorted({g.class_index for g in gts} | {p.class_index for p in preds}):
            per_class.setdefault(c, [0, 0, 0])
        for pi, p in enumerate(preds):
            per_class[p.class_index][0 if pi in matched_preds else 1] += 1
        unmatched_gts = set(range(len(gts))) - {gi for _, gi in result.pairs}
        for gi in unmatched_gts:
            per_class[gts[gi].class_index][2] += 1
        per_image.append((preds, gts, width, height))
    mean_ap, per_class_ap, curves = map_at_iou(per_image, iou_threshold)
    p = precision(agg["tp"], agg["fp"])
    r = recall(agg["tp"], agg["fn"])
    return MetricsReport(
        tp=agg["tp"],
        fp=agg["fp"],
        fn=agg["fn"],
        precision=p,
        recall=r,
        f1=f1(p, r),
        per_class_counts={c: tuple(v) for c, v in sorted(per_class.items())},
        per_class_ap=per_class_ap,
        mean_ap=mean_ap,
        mean_tp_confidence=float(np.mean(tp_confidences)) if tp_confidences else 0.0,
        iou_threshold=iou_threshold,
        images_evaluated=len(per_image),
        skipped_images=tuple(skipped),
        params=params,
        flops=flops,
        model_volume_bytes=model_volume_bytes,
        pr_points=curves,
    )
