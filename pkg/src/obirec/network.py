"""Layer graphs for the two fixed architectures: building, weight binding, and execution.

The detector is a 24-layer single-pass grid network with two detection
scales; the classifier is a depthwise-separable stack ending in a dense
softmax. Both share the same binary weight format (see
``load_darknet_weights``) and the same parameter/FLOP accounting.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import (
    BatchNormParams,
    ConvParams,
    Tensor,
    concat_channels,
    conv2d,
    global_avg_pool,
    leaky_relu,
    maxpool,
    relu6,
    softmax,
    upsample_nearest,
)

LEAKY_ALPHA = 0.1
BN_EPSILON = 1e-5
WEIGHTS_VERSION = (2, 0, 0)

# Prior box extents (w, h) in input pixels, and which of them each of the two
# detection scales predicts from (coarse 13x13 scale first).
DEFAULT_ANCHORS = ((10, 14), (23, 27), (37, 58), (81, 82), (135, 169), (344, 319))
DEFAULT_MASKS = ((3, 4, 5), (1, 2, 3))


class WeightFormatError(Exception):
    """Raised when a binary weight file cannot be bound to a network spec."""


@dataclass(frozen=True)
class ConvLayer:
    kind = "convolutional"
    filters: int
    kernel: int
    stride: int = 1
    batchnorm: bool = True
    activation: str = "leaky"  # "leaky" | "relu6" | "linear"

    @property
    def padding(self) -> int:
        return self.kernel // 2


@dataclass(frozen=True)
class MaxPoolLayer:
    kind = "maxpool"
    size: int
    stride: int


@dataclass(frozen=True)
class UpsampleLayer:
    kind = "upsample"
    factor: int


@dataclass(frozen=True)
class RouteLayer:
    kind = "route"
    sources: tuple[int, ...]


@dataclass(frozen=True)
class YoloLayer:
    kind = "yolo"
    anchor_mask: tuple[int, ...]


@dataclass(frozen=True)
class DepthwiseBlockLayer:
    """3x3 depthwise conv + BN + relu6, then 1x1 pointwise conv + BN + relu6."""

    kind = "depthwise_block"
    filters: int
    stride: int = 1


@dataclass(frozen=True)
class GlobalPoolLayer:
    kind = "global_pool"


@dataclass(frozen=True)
class DenseSoftmaxLayer:
    kind = "dense_softmax"
    classes: int


Layer = (
    ConvLayer | MaxPoolLayer | UpsampleLayer | RouteLayer | YoloLayer
    | DepthwiseBlockLayer | GlobalPoolLayer | DenseSoftmaxLayer
)


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer descriptions plus input geometry and class count."""

    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int]  # (c, h, w)
    num_classes: int
    anchors: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        yolo = [i for i, l in enumerate(self.layers) if l.kind == "yolo"]
        dense = [i for i, l in enumerate(self.layers) if l.kind == "dense_softmax"]
        if yolo and dense:
            raise ValueError("a graph cannot mix yolo and dense_softmax terminals")
        if yolo and len(yolo) != 2:
            raise ValueError(f"detection graph must have exactly two yolo layers, got {len(yolo)}")
        if dense and len(dense) != 1:
            raise ValueError(f"classifier graph must have exactly one dense_softmax layer, got {len(dense)}")
        for i, layer in enumerate(self.layers):
            if layer.kind == "route":
                if not layer.sources or any(s < 0 or s >= i for s in layer.sources):
                    raise ValueError(f"route at layer {i} references non-earlier layers {layer.sources}")
        self.output_shapes()  # raises on any shape mismatch

    @property
    def is_detector(self) -> bool:
        return any(l.kind == "yolo" for l in self.layers)

    @property
    def is_classifier(self) -> bool:
        return any(l.kind == "dense_softmax" for l in self.layers)

    def yolo_layers(self) -> list[tuple[int, tuple[int, ...]]]:
        return [(i, l.anchor_mask) for i, l in enumerate(self.layers) if l.kind == "yolo"]

    def output_shapes(self) -> list[tuple[int, int, int]]:
        """Per-layer output (c, h, w), propagated from the input."""
        shapes: list[tuple[int, int, int]] = []
        for i, layer in enumerate(self.layers):
            c, h, w = shapes[i - 1] if i else self.input_shape
            if layer.kind == "convolutional":
                p = layer.padding
                h = (h + 2 * p - layer.kernel) // layer.stride + 1
                w = (w + 2 * p - layer.kernel) // layer.stride + 1
                c = layer.filters
            elif layer.kind == "maxpool":
                h = (h - 1) // layer.stride + 1
                w = (w - 1) // layer.stride + 1
            elif layer.kind == "upsample":
                h *= layer.factor
                w *= layer.factor
            elif layer.kind == "route":
                srcs = [shapes[s] for s in layer.sources]
                if len({(sh, sw) for _, sh, sw in srcs}) != 1:
                    raise ValueError(f"route at layer {i} joins mismatched extents {srcs}")
                c = sum(sc for sc, _, _ in srcs)
                _, h, w = srcs[0]
            elif layer.kind == "yolo":
                pass  # passes the previous feature map through
            elif layer.kind == "depthwise_block":
                h = (h + 2 - 3) // layer.stride + 1
                w = (w + 2 - 3) // layer.stride + 1
                c = layer.filters
            elif layer.kind == "global_pool":
                h = w = 1
            elif layer.kind == "dense_softmax":
                c, h, w = layer.classes, 1, 1
            else:
                raise ValueError(f"unknown layer kind {layer.kind!r}")
            if h < 1 or w < 1:
                raise ValueError(f"layer {i} ({layer.kind}) collapses extent to {h}x{w}")
            shapes.append((c, h, w))
        return shapes


@dataclass(frozen=True)
class DenseParams:
    """Fully connected layer weights: (out, in) matrix plus per-out bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        if w.ndim != 2 or len(b) != w.shape[0]:
            raise ValueError(f"dense weights {w.shape} and bias {b.shape} disagree")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class LoadedNetwork:
    """A NetworkSpec with weights bound to every parametric layer."""

    spec: NetworkSpec
    layer_params: tuple
    source_digest: str = ""
    class_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class WeightSlot:
    """One parametric unit in file order (a depthwise block contributes two)."""

    layer_index: int
    label: str
    out_channels: int
    in_channels: int
    kernel: tuple[int, int]
    stride: int
    padding: int
    groups: int
    batchnorm: bool

    @property
    def weight_count(self) -> int:
        return self.out_channels * (self.in_channels // self.groups) * self.kernel[0] * self.kernel[1]

    @property
    def head_count(self) -> int:
        # beta, gamma, mean, var per channel with BN; plain bias otherwise
        return 4 * self.out_channels if self.batchnorm else self.out_channels

    @property
    def float_count(self) -> int:
        return self.head_count + self.weight_count


def weight_slots(spec: NetworkSpec) -> list[WeightSlot]:
    """Parametric units in the order they appear in a weight file."""
    shapes = spec.output_shapes()
    slots: list[WeightSlot] = []
    for i, layer in enumerate(spec.layers):
        c_in = (shapes[i - 1] if i else spec.input_shape)[0]
        if layer.kind == "convolutional":
            slots.append(WeightSlot(i, "conv", layer.filters, c_in, (layer.kernel, layer.kernel),
                                    layer.stride, layer.padding, 1, layer.batchnorm))
        elif layer.kind == "depthwise_block":
            slots.append(WeightSlot(i, "depthwise", c_in, c_in, (3, 3),
                                    layer.stride, 1, c_in, True))
            slots.append(WeightSlot(i, "pointwise", layer.filters, c_in, (1, 1),
                                    1, 0, 1, True))
        elif layer.kind == "dense_softmax":
            slots.append(WeightSlot(i, "dense", layer.classes, c_in, (1, 1), 1, 0, 1, False))
    return slots


def count_params(spec: NetworkSpec) -> int:
    """Total learned scalars: weights + biases + batchnorm constants."""
    return sum(s.float_count for s in weight_slots(spec))


def _layer_flops(layer: Layer, shape_in: tuple[int, int, int],
                 shape_out: tuple[int, int, int], slots: list[WeightSlot]) -> int:
    c_in, h_in, w_in = shape_in
    c_out, h_out, w_out = shape_out
    if layer.kind in ("convolutional", "depthwise_block", "dense_softmax"):
        total = 0
        spatial = (h_in, w_in)
        for s in slots:
            if s.label == "depthwise":
                spatial = ((spatial[0] + 2 - 3) // s.stride + 1,
                           (spatial[1] + 2 - 3) // s.stride + 1)
                sh, sw = spatial
            elif s.label == "dense":
                sh = sw = 1
            else:
                sh, sw = h_out, w_out
            total += (2 * (s.in_channels // s.groups) * s.kernel[0] * s.kernel[1]
                      * s.out_channels * sh * sw)
        return total
    if layer.kind == "maxpool":
        return (layer.size * layer.size - 1) * c_out * h_out * w_out
    if layer.kind == "global_pool":
        return c_in * h_in * w_in
    return 0


def count_flops(spec: NetworkSpec) -> int:
    """Forward-pass FLOPs: 2 per multiply-accumulate, plus pooling comparisons."""
    shapes = spec.output_shapes()
    slot_by_pos: dict[int, list[WeightSlot]] = {}
    for s in weight_slots(spec):
        slot_by_pos.setdefault(s.layer_index, []).append(s)
    return sum(
        _layer_flops(layer, shapes[i - 1] if i else spec.input_shape, shapes[i],
                     slot_by_pos.get(i, []))
        for i, layer in enumerate(spec.layers)
    )


def model_volume_bytes(spec: NetworkSpec) -> int:
    """Byte length of this network's weight file (header + float payload)."""
    return 20 + 4 * count_params(spec)


def build_yolov3_tiny(
    num_classes: int,
    input_size: int = 416,
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS,
    masks: tuple[tuple[int, ...], tuple[int, ...]] = DEFAULT_MASKS,
) -> NetworkSpec:
    """24-layer two-scale detector; the pre-terminal 1x1 convs emit 3*(classes+5) channels."""
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if input_size < 32 or input_size % 32:
        raise ValueError("input_size must be a positive multiple of 32")
    head = 3 * (num_classes + 5)
    layers: tuple[Layer, ...] = (
        ConvLayer(16, 3),                                            # 0
        MaxPoolLayer(2, 2),                                          # 1
        ConvLayer(32, 3),                                            # 2
        MaxPoolLayer(2, 2),                                          # 3
        ConvLayer(64, 3),                                            # 4
        MaxPoolLayer(2, 2),                                          # 5
        ConvLayer(128, 3),                                           # 6
        MaxPoolLayer(2, 2),                                          # 7
        ConvLayer(256, 3),                                           # 8
        MaxPoolLayer(2, 2),                                          # 9
        ConvLayer(512, 3),                                           # 10
        MaxPoolLayer(2, 1),                                          # 11
        ConvLayer(1024, 3),                                          # 12
        ConvLayer(256, 1),                                           # 13
        ConvLayer(512, 3),                                           # 14
        ConvLayer(head, 1, batchnorm=False, activation="linear"),    # 15
        YoloLayer(tuple(masks[0])),                                  # 16
        RouteLayer((13,)),                                           # 17
        ConvLayer(128, 1),                                           # 18
        UpsampleLayer(2),                                            # 19
        RouteLayer((19, 8)),                                         # 20
        ConvLayer(256, 3),                                           # 21
        ConvLayer(head, 1, batchnorm=False, activation="linear"),    # 22
        YoloLayer(tuple(masks[1])),                                  # 23
    )
    return NetworkSpec(layers, (3, input_size, input_size), num_classes, tuple(anchors))


def scaled_width(channels: int, multiplier: float) -> int:
    """Width-multiplier channel scaling: nearest multiple of 8, never below 8."""
    if multiplier == 1.0:
        return channels
    return max(8, int(round(channels * multiplier / 8)) * 8)


# (pointwise filters, depthwise stride) for each separable block.
_MOBILENET_BLOCKS = (
    (64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2),
    (512, 1), (512, 1), (512, 1), (512, 1), (512, 1), (1024, 2), (1024, 1),
)


def build_mobilenet_v1(num_classes: int, width_multiplier: float = 1.0) -> NetworkSpec:
    """Stride-2 stem conv, 13 depthwise-separable blocks, global pool, dense softmax."""
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if not 0 < width_multiplier <= 1:
        raise ValueError("width_multiplier must be in (0, 1]")
    layers: list[Layer] = [ConvLayer(scaled_width(32, width_multiplier), 3, stride=2, activation="relu6")]
    for filters, stride in _MOBILENET_BLOCKS:
        layers.append(DepthwiseBlockLayer(scaled_width(filters, width_multiplier), stride))
    layers.append(GlobalPoolLayer())
    layers.append(DenseSoftmaxLayer(num_classes))
    return NetworkSpec(tuple(layers), (3, 224, 224), num_classes)


def _read_header(blob: bytes) -> tuple[tuple[int, int, int], int, int]:
    if len(blob) < 12:
        raise WeightFormatError(f"bad header: file is {len(blob)} bytes, need at least 12")
    major, minor, revision = struct.unpack_from("<3i", blob, 0)
    if not (0 <= major <= 1000 and 0 <= minor <= 1000 and 0 <= revision <= 1_000_000):
        raise WeightFormatError(f"bad header: implausible version ({major}, {minor}, {revision})")
    if major * 10 + minor >= 2:
        if len(blob) < 20:
            raise WeightFormatError("bad header: truncated 64-bit seen counter")
        (seen,) = struct.unpack_from("<Q", blob, 12)
        offset = 20
    else:
        if len(blob) < 16:
            raise WeightFormatError("bad header: truncated 32-bit seen counter")
        (seen,) = struct.unpack_from("<I", blob, 12)
        offset = 16
    return (major, minor, revision), seen, offset


def load_darknet_weights(
    spec: NetworkSpec,
    blob: bytes,
    class_names: tuple[str, ...] = (),
) -> LoadedNetwork:
    """Bind a binary weight file to a spec.

    Per parametric unit, file order is [bn_beta, bn_gamma, bn_mean, bn_var]
    (or bias when there is no BN) followed by the convolution weights in
    (out, in/groups, kh, kw) order. The file must be consumed exactly.
    """
    _, _, offset = _read_header(blob)
    payload = len(blob) - offset
    if payload % 4:
        raise WeightFormatError(
            f"trailing bytes: payload of {payload} bytes is not a whole number of floats"
        )
    floats = np.frombuffer(blob, dtype="<f4", offset=offset)
    slots = weight_slots(spec)
    expected = sum(s.float_count for s in slots)
    pos = 0
    bound: dict[int, list] = {}
    for slot in slots:
        if pos + slot.float_count > len(floats):
            raise WeightFormatError(
                f"truncated at layer {slot.layer_index} ({slot.label}): "
                f"expected {expected} floats total, file has {len(floats)}"
            )
        if slot.batchnorm:
            beta = floats[pos:pos + slot.out_channels].copy()
            pos += slot.out_channels
            gamma = floats[pos:pos + slot.out_channels].copy()
            pos += slot.out_channels
            mean = floats[pos:pos + slot.out_channels].copy()
            pos += slot.out_channels
            var = floats[pos:pos + slot.out_channels].copy()
            pos += slot.out_channels
            bias = np.zeros(slot.out_channels, dtype=np.float32)
            bn = BatchNormParams(gamma, beta, mean, var, BN_EPSILON)
        else:
            bias = floats[pos:pos + slot.out_channels].copy()
            pos += slot.out_channels
            bn = None
        w = floats[pos:pos + slot.weight_count].copy()
        pos += slot.weight_count
        if slot.label == "dense":
            bound.setdefault(slot.layer_index, []).append(
                DenseParams(w.reshape(slot.out_channels, slot.in_channels), bias)
            )
        else:
            bound.setdefault(slot.layer_index, []).append(
                ConvParams(
                    out_channels=slot.out_channels,
                    in_channels=slot.in_channels,
                    kernel=slot.kernel,
                    weights=w,
                    bias=bias,
                    stride=slot.stride,
                    padding=slot.padding,
                    groups=slot.groups,
                    batchnorm=bn,
                )
            )
    if pos != len(floats):
        raise WeightFormatError(
            f"trailing data: network needs {pos} floats, file has {len(floats)}"
        )
    layer_params = tuple(
        (tuple(bound[i]) if len(bound.get(i, ())) > 1 else bound[i][0]) if i in bound else None
        for i in range(len(spec.layers))
    )
    return LoadedNetwork(
        spec=spec,
        layer_params=layer_params,
        source_digest=hashlib.sha256(blob).hexdigest(),
        class_names=tuple(class_names),
    )


def save_weights(net: LoadedNetwork) -> bytes:
    """Exact inverse of load_darknet_weights; header is version (2, 0, 0), seen=0."""
    chunks: list[np.ndarray] = []
    for params in net.layer_params:
        if params is None:
            continue
        units = params if isinstance(params, tuple) else (params,)
        for p in units:
            if isinstance(p, DenseParams):
                chunks.append(p.bias)
                chunks.append(p.weights.reshape(-1))
            else:
                if p.batchnorm is not None:
                    bn = p.batchnorm
                    chunks.extend((bn.beta, bn.gamma, bn.running_mean, bn.running_var))
                else:
                    chunks.append(p.bias)
                chunks.append(p.weights)
    header = struct.pack("<3iQ", *WEIGHTS_VERSION, 0)
    if not chunks:
        return header
    return header + np.concatenate(chunks).astype("<f4").tobytes()


def random_weights(spec: NetworkSpec, seed: int = 0, scale: float = 0.05,
                   class_names: tuple[str, ...] = ()) -> LoadedNetwork:
    """Small random weights with near-identity batchnorm; handy for tests and benchmarks."""
    rng = np.random.default_rng(seed)
    parts: list[np.ndarray] = []
    for slot in weight_slots(spec):
        n = slot.out_channels
        if slot.batchnorm:
            beta = rng.normal(0, 0.01, n)
            gamma = rng.normal(1, 0.05, n)
            mean = rng.normal(0, 0.01, n)
            var = np.abs(rng.normal(1, 0.05, n))
            parts.extend((beta, gamma, mean, var))
        else:
            parts.append(rng.normal(0, 0.01, n))
        fan_in = (slot.in_channels // slot.groups) * slot.kernel[0] * slot.kernel[1]
        parts.append(rng.normal(0, scale / np.sqrt(fan_in), slot.weight_count))
    blob = struct.pack("<3iQ", *WEIGHTS_VERSION, 0)
    if parts:
        blob += np.concatenate(parts).astype("<f4").tobytes()
    return load_darknet_weights(spec, blob, class_names)


def zero_weights(spec: NetworkSpec, class_names: tuple[str, ...] = ()) -> LoadedNetwork:
    """All-zero weight binding (zero BN gamma included): every pre-activation map is zero."""
    blob = struct.pack("<3iQ", *WEIGHTS_VERSION, 0)
    total = count_params(spec)
    blob += np.zeros(total, dtype="<f4").tobytes()
    return load_darknet_weights(spec, blob, class_names)


def _activate(x: Tensor, activation: str) -> Tensor:
    if activation == "leaky":
        return leaky_relu(x, LEAKY_ALPHA)
    if activation == "relu6":
        return relu6(x)
    if activation == "linear":
        return x
    raise ValueError(f"unknown activation {activation!r}")


def forward(net: LoadedNetwork, x: Tensor) -> list[Tensor]:
    """Run the graph; returns the terminal outputs in layer order.

    Detector: the two raw grid feature maps (coarse scale first).
    Classifier: the single class-probability vector.
    """
    spec = net.spec
    if x.shape != spec.input_shape:
        raise ValueError(f"input extent {x.shape} != network input {spec.input_shape}")
    outputs: list[Tensor] = []
    terminals: list[Tensor] = []
    for i, layer in enumerate(spec.layers):
        prev = outputs[i - 1] if i else x
        params = net.layer_params[i]
        if layer.kind == "convolutional":
            y = _activate(conv2d(prev, params), layer.activation)
        elif layer.kind == "maxpool":
            y = maxpool(prev, layer.size, layer.stride)
        elif layer.kind == "upsample":
            y = upsample_nearest(prev, layer.factor)
        elif layer.kind == "route":
            y = outputs[layer.sources[0]]
            for s in layer.sources[1:]:
                y = concat_channels(y, outputs[s])
        elif layer.kind == "yolo":
            y = prev
            terminals.append(y)
        elif layer.kind == "depthwise_block":
            dw, pw = params
            y = relu6(conv2d(prev, dw))
            y = relu6(conv2d(y, pw))
        elif layer.kind == "global_pool":
            y = global_avg_pool(prev)
        elif layer.kind == "dense_softmax":
            v = prev.flat()
            logits = params.weights @ v + params.bias
            y = softmax(Tensor(logits.reshape(-1, 1, 1)))
            terminals.append(y)
        else:
            raise ValueError(f"unknown layer kind {layer.kind!r}")
        outputs.append(y)
    return terminals


def format_extent(shape: tuple[int, int, int]) -> str:
    """(c, h, w) printed in the conventional W x H x C order."""
    c, h, w = shape
    return f"{w}x{h}x{c}"


def describe(spec: NetworkSpec) -> list[dict]:
    """Per-layer rows (kind, filters, geometry, shapes, params, flops) for reports."""
    shapes = spec.output_shapes()
    slot_by_pos: dict[int, list[WeightSlot]] = {}
    for s in weight_slots(spec):
        slot_by_pos.setdefault(s.layer_index, []).append(s)
    rows = []
    for i, layer in enumerate(spec.layers):
        inp = shapes[i - 1] if i else spec.input_shape
        filters = ""
        geometry = ""
        if layer.kind == "convolutional":
            filters = str(layer.filters)
            geometry = f"{layer.kernel}x{layer.kernel}/{layer.stride}"
        elif layer.kind == "maxpool":
            geometry = f"{layer.size}x{layer.size}/{layer.stride}"
        elif layer.kind == "upsample":
            geometry = f"x{layer.factor}"
        elif layer.kind == "route":
            geometry = ",".join(str(s) for s in layer.sources)
        elif layer.kind == "depthwise_block":
            filters = str(layer.filters)
            geometry = f"3x3/{layer.stride}+1x1/1"
        elif layer.kind == "dense_softmax":
            filters = str(layer.classes)
        rows.append({
            "index": i,
            "kind": layer.kind,
            "filters": filters,
            "geometry": geometry,
            "input": format_extent(inp),
            "output": format_extent(shapes[i]),
            "params": sum(s.float_count for s in slot_by_pos.get(i, ())),
            "flops": _layer_flops(layer, inp, shapes[i], slot_by_pos.get(i, [])),
        })
    return rows
