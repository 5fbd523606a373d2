"""Dense (channels, height, width) tensors and the numeric kernels used by both networks.

All kernels are pure functions over immutable inputs: they allocate fresh
output tensors and never mutate their arguments, so concurrent use needs no
locking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

DTYPE = np.float32


class Tensor:
    """Immutable dense array in channel-major (C, H, W) layout."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=DTYPE)
        if arr.ndim != 3:
            raise ValueError(f"tensor must be (channels, height, width), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all tensor dimensions must be >= 1, got {arr.shape}")
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def from_flat(cls, shape: tuple[int, int, int], values) -> "Tensor":
        return cls(np.asarray(values, dtype=DTYPE).reshape(shape))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


@dataclass(frozen=True)
class BatchNormParams:
    """Per-channel inference-time batch normalization constants."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=DTYPE).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = len(self.gamma)
        if any(len(getattr(self, f)) != n for f in ("beta", "running_mean", "running_var")):
            raise ValueError("batchnorm parameter arrays must all have the same length")
        if np.any(self.running_var < 0):
            raise ValueError("batchnorm running_var entries must be >= 0")


@dataclass(frozen=True)
class ConvParams:
    """Weights and geometry of one convolution.

    `weights` is flat in (out_channel, in_channel/groups, kh, kw) order;
    groups == 1 is a standard convolution, groups == in_channels depthwise.
    """

    out_channels: int
    in_channels: int
    kernel: tuple[int, int]
    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    groups: int = 1
    batchnorm: BatchNormParams | None = None

    def __post_init__(self):
        if self.out_channels < 1 or self.in_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.stride < 1 or self.padding < 0 or self.groups < 1:
            raise ValueError("stride must be >= 1, padding >= 0, groups >= 1")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"channels ({self.in_channels} in, {self.out_channels} out) must be divisible "
                f"by groups ({self.groups})"
            )
        kh, kw = self.kernel
        if kh < 1 or kw < 1:
            raise ValueError("kernel extents must be >= 1")
        w = np.ascontiguousarray(self.weights, dtype=DTYPE).reshape(-1)
        expected = self.out_channels * (self.in_channels // self.groups) * kh * kw
        if len(w) != expected:
            raise ValueError(f"weights length {len(w)} != expected {expected}")
        b = np.ascontiguousarray(self.bias, dtype=DTYPE).reshape(-1)
        if len(b) != self.out_channels:
            raise ValueError(f"bias length {len(b)} != out_channels {self.out_channels}")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        if self.batchnorm is not None and len(self.batchnorm.gamma) != self.out_channels:
            raise ValueError("batchnorm channel count != out_channels")


def _windows(data: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Read-only (C, oh, ow, kh, kw) sliding-window view of a (C, H, W) array."""
    c, h, w = data.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sc, sh, sw = data.strides
    return as_strided(
        data,
        shape=(c, oh, ow, kh, kw),
        strides=(sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """2-D convolution with optional batchnorm applied after bias, before any activation."""
    if x.channels != p.in_channels:
        raise ValueError(f"conv2d expected {p.in_channels} input channels, got {x.channels}")
    kh, kw = p.kernel
    padded_h = x.height + 2 * p.padding
    padded_w = x.width + 2 * p.padding
    if padded_h < kh or padded_w < kw:
        raise ValueError(
            f"kernel {kh}x{kw} does not fit padded input {padded_h}x{padded_w}"
        )
    data = x.data
    if p.padding:
        data = np.pad(data, ((0, 0), (p.padding, p.padding), (p.padding, p.padding)))
    win = _windows(data, kh, kw, p.stride)
    oh, ow = win.shape[1], win.shape[2]
    w = p.weights.reshape(p.out_channels, p.in_channels // p.groups, kh, kw)
    if p.groups == 1:
        out = np.tensordot(w, win, axes=((1, 2, 3), (0, 3, 4)))
    elif p.groups == p.in_channels == p.out_channels:
        out = np.einsum("cijkl,ckl->cij", win, w[:, 0], optimize=True)
    else:
        cin_g = p.in_channels // p.groups
        cout_g = p.out_channels // p.groups
        out = np.empty((p.out_channels, oh, ow), dtype=DTYPE)
        for g in range(p.groups):
            out[g * cout_g:(g + 1) * cout_g] = np.tensordot(
                w[g * cout_g:(g + 1) * cout_g],
                win[g * cin_g:(g + 1) * cin_g],
                axes=((1, 2, 3), (0, 3, 4)),
            )
    out = out + p.bias[:, None, None]
    if p.batchnorm is not None:
        bn = p.batchnorm
        scale = bn.gamma / np.sqrt(bn.running_var + DTYPE(bn.epsilon))
        out = scale[:, None, None] * (out - bn.running_mean[:, None, None]) + bn.beta[:, None, None]
    return Tensor(out)


def depthwise_separable(x: Tensor, dw: ConvParams, pw: ConvParams) -> Tensor:
    """Depthwise 3x3 stage then pointwise 1x1 stage, as a raw conv2d composition."""
    if dw.groups != x.channels:
        raise ValueError(f"depthwise stage needs groups == input channels ({x.channels}), got {dw.groups}")
    if pw.kernel != (1, 1):
        raise ValueError(f"pointwise stage must use a 1x1 kernel, got {pw.kernel}")
    if pw.in_channels != dw.out_channels:
        raise ValueError(
            f"pointwise expects {pw.in_channels} channels but depthwise emits {dw.out_channels}"
        )
    return conv2d(conv2d(x, dw), pw)


def maxpool(x: Tensor, size: int, stride: int) -> Tensor:
    """Window max. Edges pad with -inf so output extent is (dim - 1) // stride + 1."""
    if size < 1 or stride < 1:
        raise ValueError("pool size and stride must be >= 1")
    pad = size - 1
    before = pad // 2
    data = np.pad(
        x.data, ((0, 0), (before, pad - before), (before, pad - before)),
        constant_values=-np.inf,
    )
    win = _windows(data, size, size, stride)
    return Tensor(win.max(axis=(3, 4)))


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each cell factor x factor; channels unchanged."""
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    if factor == 1:
        return x
    return Tensor(np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack a's channels before b's; spatial extents must agree."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(f"concat_channels spatial mismatch: {a.shape} vs {b.shape}")
    return Tensor(np.concatenate((a.data, b.data), axis=0))


def leaky_relu(x: Tensor, alpha: float) -> Tensor:
    d = x.data
    return Tensor(np.where(d >= 0, d, DTYPE(alpha) * d))


def relu6(x: Tensor) -> Tensor:
    return Tensor(np.clip(x.data, 0.0, 6.0))


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over a (C, 1, 1) logit vector."""
    if x.height != 1 or x.width != 1:
        raise ValueError(f"softmax expects a (C, 1, 1) logit vector, got {x.shape}")
    z = x.data - x.data.max()
    e = np.exp(z)
    return Tensor(e / e.sum())


def global_avg_pool(x: Tensor) -> Tensor:
    """Reduce each channel to its spatial mean, yielding (C, 1, 1)."""
    return Tensor(x.data.mean(axis=(1, 2), keepdims=True))
