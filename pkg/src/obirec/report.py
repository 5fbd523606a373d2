"""Report rendering: metric tables, name=value text, and figure files.

Figures are drawn with matplotlib's object API (no pyplot globals), so
rendering is safe from library code and worker threads.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from .detect import Detection
from .evaluate import MetricsReport


def format_metrics_table(report: MetricsReport) -> str:
    """Human-readable summary with the headline Confidence/Precision/Recall rows."""
    rows = [
        ("Confidence", f"{report.mean_tp_confidence * 100:.2f}%"),
        ("Precision", f"{report.precision * 100:.2f}%"),
        ("Recall", f"{report.recall * 100:.2f}%"),
        ("F1", f"{report.f1 * 100:.2f}%"),
        (f"mAP@{report.iou_threshold:g}", f"{report.mean_ap * 100:.2f}%"),
        ("TP / FP / FN", f"{report.tp} / {report.fp} / {report.fn}"),
        ("Images", str(report.images_evaluated)),
        ("Parameters", str(report.params)),
        ("FLOPs", str(report.flops)),
        ("Model volume", f"{report.model_volume_bytes} bytes"),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"{name:<{width}}  {value}" for name, value in rows]
    if report.skipped_images:
        lines.append("")
        lines.append("Skipped images:")
        lines.extend(f"  {name}: {reason}" for name, reason in report.skipped_images)
    return "\n".join(lines)


def format_metrics_lines(report: MetricsReport) -> str:
    """Machine-readable one-metric-per-line name=value text."""
    lines = [
        f"tp={report.tp}",
        f"fp={report.fp}",
        f"fn={report.fn}",
        f"precision={report.precision:.6f}",
        f"recall={report.recall:.6f}",
        f"f1={report.f1:.6f}",
        f"map={report.mean_ap:.6f}",
        f"iou_threshold={report.iou_threshold:g}",
        f"mean_tp_confidence={report.mean_tp_confidence:.6f}",
        f"images_evaluated={report.images_evaluated}",
        f"images_skipped={len(report.skipped_images)}",
        f"params={report.params}",
        f"flops={report.flops}",
        f"model_volume_bytes={report.model_volume_bytes}",
    ]
    lines.extend(f"ap_class_{c}={ap:.6f}" for c, ap in sorted(report.per_class_ap.items()))
    return "\n".join(lines) + "\n"


def save_pr_figure(
    curves: dict[int, tuple[np.ndarray, np.ndarray]],
    path: str | Path,
    class_names: Sequence[str] = (),
) -> None:
    """Write a precision/recall figure with one line per class."""
    fig = Figure(figsize=(6, 5), dpi=110)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)
    for c, (recalls, precisions) in sorted(curves.items()):
        label = class_names[c] if c < len(class_names) else f"class {c}"
        if len(recalls):
            ax.plot(np.concatenate(([0.0], recalls)), np.concatenate((precisions[:1], precisions)),
                    drawstyle="steps-post", label=label)
        else:
            ax.plot([0], [0], marker=".", label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    if curves:
        ax.legend(loc="lower left", fontsize=8)
    fig.savefig(path, bbox_inches="tight")


def render_detections(
    image: np.ndarray,
    detections: Sequence[Detection],
    path: str | Path,
) -> None:
    """Draw labeled detection rectangles over the image and save to a file."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    fig = Figure(figsize=(w / 100, h / 100), dpi=100)
    FigureCanvasAgg(fig)
    ax = fig.add_axes((0, 0, 1, 1))
    ax.imshow(img)
    ax.set_axis_off()
    cmap = ("tab:red", "tab:blue", "tab:green", "tab:orange", "tab:purple",
            "tab:cyan", "tab:olive", "tab:pink")
    for d in detections:
        x1, y1, x2, y2 = d.box.corners()
        color = cmap[d.class_index % len(cmap)]
        ax.add_patch(Rectangle((x1, y1), x2 - x1, y2 - y1,
                               fill=False, edgecolor=color, linewidth=1.5))
        ax.text(x1, max(y1 - 2, 0), f"{d.class_name} {d.confidence:.2f}",
                color="white", fontsize=8,
                bbox={"facecolor": color, "alpha": 0.8, "pad": 1, "edgecolor": "none"})
    fig.savefig(path)


def save_report_files(
    report: MetricsReport,
    curves: dict[int, tuple[np.ndarray, np.ndarray]],
    out_dir: str | Path,
    class_names: Sequence[str] = (),
) -> list[Path]:
    """Write metrics.txt (name=value) and pr_curves.png into a report directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.txt"
    metrics_path.write_text(format_metrics_lines(report), encoding="utf-8")
    figure_path = out / "pr_curves.png"
    save_pr_figure(curves, figure_path, class_names)
    return [metrics_path, figure_path]
