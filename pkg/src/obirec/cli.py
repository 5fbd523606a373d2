"""Command-line entry points: detect, classify, eval, inspect, bench, serve.

Exit codes: 0 success, 1 bad input, 2 model-load failure.
"""
from __future__ import annotations

import argparse
import os
import statistics
import sys
import time
from pathlib import Path

from . import evaluate, report
from .classify import predict_crop
from .config import RunConfig, load_config, load_labels
from .detect import detect
from .imageio import load_image
from .network import (
    LoadedNetwork,
    WeightFormatError,
    build_mobilenet_v1,
    build_yolov3_tiny,
    count_flops,
    count_params,
    describe,
    forward,
    load_darknet_weights,
    model_volume_bytes,
    random_weights,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_MODEL_LOAD = 2


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return load_config(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"config: {exc}", EXIT_BAD_INPUT)


def _read_labels(path: str) -> tuple[str, ...]:
    try:
        return load_labels(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"labels: {exc}", EXIT_BAD_INPUT)


def _read_image(path: str):
    try:
        return load_image(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"image: {exc}", EXIT_BAD_INPUT)


def _bind_weights(spec, weights_path: str, names: tuple[str, ...]) -> LoadedNetwork:
    try:
        blob = Path(weights_path).read_bytes()
        return load_darknet_weights(spec, blob, names)
    except (OSError, WeightFormatError) as exc:
        raise CliError(f"weights: {exc}", EXIT_MODEL_LOAD)


def _load_detector(weights: str, labels: str, config_path: str | None) -> LoadedNetwork:
    names = _read_labels(labels)
    cfg = _read_config(config_path)
    spec = build_yolov3_tiny(
        cfg.classes if cfg.classes is not None else len(names),
        input_size=cfg.input_size,
        anchors=cfg.anchors,
        masks=cfg.masks,
    )
    return _bind_weights(spec, weights, names)


def _load_classifier(weights: str, labels: str, alpha: float) -> LoadedNetwork:
    names = _read_labels(labels)
    spec = build_mobilenet_v1(len(names), alpha)
    return _bind_weights(spec, weights, names)


def _detection_lines(detections) -> list[str]:
    lines = []
    for d in detections:
        x1, y1, _, _ = d.box.corners()
        lines.append(f"{d.class_name} {d.confidence:.4f} {x1:.1f} {y1:.1f} {d.box.w:.1f} {d.box.h:.1f}")
    return lines


def _cmd_detect(args) -> int:
    net = _load_detector(args.weights, args.labels, args.config)
    image = _read_image(args.image)
    detections = detect(image, net, args.confidence, args.nms)
    lines = _detection_lines(detections)
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).write_text("".join(f"{l}\n" for l in lines), encoding="utf-8")
    if args.render:
        report.render_detections(image, detections, args.render)
    return EXIT_OK


def _parse_rect(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise CliError(f"--rect expects x,y,w,h, got {text!r}", EXIT_BAD_INPUT)
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError:
        raise CliError(f"--rect values must be numeric, got {text!r}", EXIT_BAD_INPUT)
    return x, y, w, h


def _cmd_classify(args) -> int:
    net = _load_classifier(args.weights, args.labels, args.alpha)
    image = _read_image(args.image)
    rect = _parse_rect(args.rect)
    try:
        predictions = predict_crop(net, image, rect, args.top_k)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_BAD_INPUT)
    for p in predictions:
        print(f"{p.class_name} {p.probability:.4f}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    net = _load_detector(args.weights, args.labels, args.config)
    if not Path(args.images).is_dir():
        raise CliError(f"images: {args.images} is not a directory", EXIT_BAD_INPUT)
    result = evaluate.evaluate_dataset(
        lambda image: detect(image, net, args.confidence, args.nms),
        args.images,
        iou_threshold=args.iou,
        params=count_params(net.spec),
        flops=count_flops(net.spec),
        model_volume_bytes=model_volume_bytes(net.spec),
    )
    print(report.format_metrics_table(result))
    print()
    print(report.format_metrics_lines(result), end="")
    if args.report_dir:
        paths = report.save_report_files(result, result.pr_points, args.report_dir, net.class_names)
        for p in paths:
            print(f"wrote {p}", file=sys.stderr)
    if result.skipped_images:
        print(f"error: {len(result.skipped_images)} image(s) skipped", file=sys.stderr)
        return EXIT_BAD_INPUT
    return EXIT_OK


def _build_arch(args):
    if args.arch == "yolov3-tiny":
        cfg = _read_config(getattr(args, "config", None))
        classes = args.classes if args.classes else (cfg.classes or 80)
        return build_yolov3_tiny(classes, input_size=args.input_size,
                                 anchors=cfg.anchors, masks=cfg.masks)
    return build_mobilenet_v1(args.classes or 1000, args.alpha)


def _cmd_inspect(args) -> int:
    spec = _build_arch(args)
    header = f"{'layer':>5}  {'type':<16} {'filters':>7}  {'size/stride':<12} {'input':<14} {'output':<14} {'params':>10}  {'flops':>14}"
    print(header)
    print("-" * len(header))
    for row in describe(spec):
        print(f"{row['index']:>5}  {row['kind']:<16} {row['filters']:>7}  "
              f"{row['geometry']:<12} {row['input']:<14} {row['output']:<14} "
              f"{row['params']:>10}  {row['flops']:>14}")
    print("-" * len(header))
    print(f"total params: {count_params(spec)}")
    print(f"total flops:  {count_flops(spec)}")
    print(f"model volume: {model_volume_bytes(spec)} bytes")
    if args.weights:
        names = _read_labels(args.labels) if args.labels else ()
        net = _bind_weights(spec, args.weights, names)
        print(f"weights digest: sha256:{net.source_digest}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    spec = _build_arch(args)
    net = random_weights(spec, seed=args.seed)
    from .tensor import Tensor  # local import keeps module load light
    import numpy as np

    rng = np.random.default_rng(args.seed)
    x = Tensor(rng.random(spec.input_shape, dtype=np.float32))
    forward(net, x)  # warmup
    samples = []
    for _ in range(args.iterations):
        t0 = time.perf_counter()
        forward(net, x)
        samples.append((time.perf_counter() - t0) * 1000)
    print(f"arch: {args.arch}  input: {spec.input_shape[2]}x{spec.input_shape[1]}x{spec.input_shape[0]}")
    print(f"iterations: {len(samples)}")
    print(f"mean_ms: {statistics.mean(samples):.2f}")
    print(f"median_ms: {statistics.median(samples):.2f}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    detector = _load_detector(args.weights_detector, args.labels, args.config) \
        if args.weights_detector else None
    classifier = _load_classifier(args.weights_classifier, args.labels, args.alpha) \
        if args.weights_classifier else None
    names = _read_labels(args.labels) if args.labels else ()
    app = create_app(
        detector,
        classifier,
        class_names=names,
        nms_threshold=args.nms,
        max_upload_bytes=args.max_upload_bytes,
        session_ttl_seconds=args.session_ttl_seconds,
        static_dir=args.static_dir,
        spool_dir=args.spool_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _env(name: str, default, cast):
    raw = os.environ.get(name)
    return cast(raw) if raw is not None else default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="obirec",
                                     description="two-stage glyph detection and crop classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect glyphs in one image")
    p.add_argument("image")
    p.add_argument("--weights", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--confidence", type=float, default=0.1)
    p.add_argument("--nms", type=float, default=0.5)
    p.add_argument("--out", default=None, help="also write detection lines to this file")
    p.add_argument("--render", default=None, help="draw labeled boxes into this image file")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("classify", help="classify a cropped region of an image")
    p.add_argument("image")
    p.add_argument("--rect", required=True, help="crop as x,y,w,h in pixels")
    p.add_argument("--weights", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--alpha", type=float, default=1.0, help="classifier width multiplier")
    p.add_argument("--top-k", type=int, default=5, dest="top_k")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("eval", help="evaluate detection metrics over an annotated directory")
    p.add_argument("--images", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--confidence", type=float, default=0.1)
    p.add_argument("--nms", type=float, default=0.5)
    p.add_argument("--report-dir", default=None, dest="report_dir",
                   help="write metrics.txt and pr_curves.png here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("inspect", help="print per-layer shapes, params, and FLOPs")
    p.add_argument("--arch", choices=("yolov3-tiny", "mobilenet-v1"), required=True)
    p.add_argument("--classes", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--input-size", type=int, default=416, dest="input_size")
    p.add_argument("--config", default=None)
    p.add_argument("--weights", default=None)
    p.add_argument("--labels", default=None)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("bench", help="time forward passes with random weights")
    p.add_argument("--arch", choices=("yolov3-tiny", "mobilenet-v1"), required=True)
    p.add_argument("--classes", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--input-size", type=int, default=416, dest="input_size")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="run the recognition HTTP service")
    p.add_argument("--host", default=_env("OBIREC_HOST", "127.0.0.1", str))
    p.add_argument("--port", type=int, default=_env("OBIREC_PORT", 8080, int))
    p.add_argument("--weights-detector", default=_env("OBIREC_WEIGHTS_DETECTOR", None, str),
                   dest="weights_detector")
    p.add_argument("--weights-classifier", default=_env("OBIREC_WEIGHTS_CLASSIFIER", None, str),
                   dest="weights_classifier")
    p.add_argument("--labels", default=_env("OBIREC_LABELS", None, str))
    p.add_argument("--config", default=_env("OBIREC_CONFIG", None, str))
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--nms", type=float, default=0.5)
    p.add_argument("--static-dir", default=_env("OBIREC_STATIC_DIR", None, str), dest="static_dir")
    p.add_argument("--spool-dir", default=None, dest="spool_dir")
    p.add_argument("--session-ttl-seconds", type=float,
                   default=_env("OBIREC_SESSION_TTL_SECONDS", 3600.0, float),
                   dest="session_ttl_seconds")
    p.add_argument("--max-upload-bytes", type=int,
                   default=_env("OBIREC_MAX_UPLOAD_BYTES", 16 * 1024 * 1024, int),
                   dest="max_upload_bytes")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
