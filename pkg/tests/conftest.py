"""Shared test helpers: random parameter factories and tiny synthetic inputs."""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable

from obirec.tensor import BatchNormParams, ConvParams, Tensor


def random_conv_params(rng, in_channels, out_channels, kernel, stride=1, padding=0,
                       groups=1, with_bn=False):
    kh, kw = kernel
    weights = rng.normal(0, 1, out_channels * (in_channels // groups) * kh * kw)
    bias = rng.normal(0, 1, out_channels)
    bn = None
    if with_bn:
        bn = BatchNormParams(
            gamma=rng.normal(1, 0.2, out_channels),
            beta=rng.normal(0, 0.2, out_channels),
            running_mean=rng.normal(0, 0.2, out_channels),
            running_var=np.abs(rng.normal(1, 0.2, out_channels)),
        )
    return ConvParams(
        out_channels=out_channels,
        in_channels=in_channels,
        kernel=kernel,
        weights=weights,
        bias=bias,
        stride=stride,
        padding=padding,
        groups=groups,
        batchnorm=bn,
    )


def random_tensor(rng, channels, height, width):
    return Tensor(rng.normal(0, 1, (channels, height, width)))


def bn_tuple(p: ConvParams):
    """Batchnorm constants of a ConvParams in the oracle's tuple form."""
    bn = p.batchnorm
    if bn is None:
        return None
    return (np.asarray(bn.gamma, dtype=np.float64),
            np.asarray(bn.beta, dtype=np.float64),
            np.asarray(bn.running_mean, dtype=np.float64),
            np.asarray(bn.running_var, dtype=np.float64),
            bn.epsilon)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
