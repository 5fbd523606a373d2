"""Plain-text key=value run configuration and class-label files.

Recognized keys: ``classes`` (int), ``anchors`` (flat comma-separated w,h
pairs), ``masks`` (semicolon-separated index groups, coarse scale first),
``input_size`` (int). Unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .network import DEFAULT_ANCHORS, DEFAULT_MASKS


@dataclass(frozen=True)
class RunConfig:
    classes: int | None = None
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
    masks: tuple[tuple[int, ...], ...] = DEFAULT_MASKS
    input_size: int = 416


def _parse_anchors(value: str) -> tuple[tuple[float, float], ...]:
    parts = [p for p in value.replace(" ", "").split(",") if p]
    if len(parts) % 2:
        raise ValueError(f"anchors need an even number of values, got {len(parts)}")
    floats = [float(p) for p in parts]
    return tuple((floats[i], floats[i + 1]) for i in range(0, len(floats), 2))


def _parse_masks(value: str) -> tuple[tuple[int, ...], ...]:
    groups = [g for g in value.replace(" ", "").split(";") if g]
    if len(groups) != 2:
        raise ValueError(f"masks need two ;-separated groups, got {len(groups)}")
    return tuple(tuple(int(i) for i in g.split(",") if i) for g in groups)


def parse_config_text(text: str) -> RunConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "classes":
            values["classes"] = int(value)
        elif key == "anchors":
            values["anchors"] = _parse_anchors(value)
        elif key == "masks":
            values["masks"] = _parse_masks(value)
        elif key == "input_size":
            values["input_size"] = int(value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    cfg = RunConfig(**values)
    for mask in cfg.masks:
        if any(m < 0 or m >= len(cfg.anchors) for m in mask):
            raise ValueError(f"mask {mask} indexes outside the {len(cfg.anchors)} anchors")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def load_labels(path: str | Path) -> tuple[str, ...]:
    """One class name per line; line index is the class index."""
    names = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    while names and not names[-1]:
        names.pop()
    if not names:
        raise ValueError(f"label file {path} is empty")
    return tuple(names)
