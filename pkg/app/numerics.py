# -*- coding: utf-8 -*-
"""
Grid numerics shared by every model module.

A Tensor3 is a float64 numpy array shaped (channels, height, width); C order
gives the channel-major, row, column layout the weight archive relies on.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .exceptions import ShapeError, ValidationError

ACTIVATIONS = ("none", "relu", "sigmoid")
TRANSPOSED_STRIDES = (1, 2, 4)


def as_tensor3(x, name="tensor"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError("%s must be (C, H, W), got shape %s" % (name, x.shape))
    if not np.isfinite(x).all():
        raise ValidationError("%s contains NaN or Inf" % name)
    return x


def _finite(out, op):
    if not np.isfinite(out).all():
        raise ValidationError("%s produced non-finite values" % op)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return expit(x)


def softmax(x, axis=0):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def activate(x, activation):
    if activation == "relu":
        return relu(x)
    if activation == "sigmoid":
        return sigmoid(x)
    return x


def make_rng(seed, *keys):
    """independent, reproducible stream for (seed, key, key, ...)"""
    return np.random.default_rng([int(seed)] + [int(k) for k in keys])


def he_normal(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / max(fan_in, 1))


@dataclass(frozen=True)
class ConvSpec:
    """
    Convolution layer.

    weights: (out, in/groups, kh, kw) for a regular convolution and
    (in, out/groups, kh, kw) when transposed, so both specs built on one
    array are adjoint to each other.
    """

    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0
    groups: int = 1
    activation: str = "none"
    transposed: bool = False

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 4:
            raise ShapeError("conv weights must be rank 4, got %s" % (weights.shape,))
        object.__setattr__(self, "weights", weights)
        if self.groups < 1 or self.stride < 1 or self.padding < 0:
            raise ValidationError(
                "invalid stride/padding/groups %d/%d/%d"
                % (self.stride, self.padding, self.groups)
            )
        if self.activation not in ACTIVATIONS:
            raise ValidationError("unknown activation %r" % self.activation)
        if self.transposed and self.stride not in TRANSPOSED_STRIDES:
            raise ValidationError(
                "transposed stride must be one of %s" % (TRANSPOSED_STRIDES,)
            )
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                "channels %d->%d not divisible by groups %d"
                % (self.in_channels, self.out_channels, self.groups)
            )
        if self.transposed and weights.shape[0] % self.groups:
            raise ShapeError("transposed weights do not split into %d groups" % self.groups)
        bias = self.bias
        if bias is None:
            bias = np.zeros(self.out_channels)
        bias = np.asarray(bias, dtype=np.float64).reshape(-1)
        if bias.shape[0] != self.out_channels:
            raise ShapeError(
                "bias length %d != out channels %d" % (bias.shape[0], self.out_channels)
            )
        object.__setattr__(self, "bias", bias)

    @property
    def in_channels(self):
        if self.transposed:
            return self.weights.shape[0]
        return self.weights.shape[1] * self.groups

    @property
    def out_channels(self):
        if self.transposed:
            return self.weights.shape[1] * self.groups
        return self.weights.shape[0]

    @property
    def kernel_size(self):
        return self.weights.shape[2], self.weights.shape[3]


@dataclass(frozen=True)
class MlpSpec:
    """dense layers; relu between layers, the last layer stays linear"""

    layers: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        layers = []
        for i, (w, b) in enumerate(self.layers):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if w.ndim != 2 or b.shape[0] != w.shape[0]:
                raise ShapeError("mlp layer %d: weight %s, bias %s" % (i, w.shape, b.shape))
            if layers and layers[-1][0].shape[0] != w.shape[1]:
                raise ShapeError(
                    "mlp layer %d expects %d inputs, previous layer gives %d"
                    % (i, w.shape[1], layers[-1][0].shape[0])
                )
            layers.append((w, b))
        object.__setattr__(self, "layers", layers)

    @property
    def widths(self):
        if not self.layers:
            return []
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]


def mlp_forward(x, spec):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if spec.layers and x.shape[0] != spec.layers[0][0].shape[1]:
        raise ShapeError(
            "mlp input length %d != %d" % (x.shape[0], spec.layers[0][0].shape[1])
        )
    for i, (w, b) in enumerate(spec.layers):
        x = w @ x + b
        if i < len(spec.layers) - 1:
            x = relu(x)
    return x


def conv2d(x, spec):
    """cross-correlation with zero padding"""
    x = as_tensor3(x, "conv2d input")
    if spec.transposed:
        raise ShapeError("conv2d got a transposed spec")
    c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(
            "conv2d: input has %d channels, layer expects %d" % (c, spec.in_channels)
        )
    kh, kw = spec.kernel_size
    s, p = spec.stride, spec.padding
    ho = (h + 2 * p - kh) // s + 1
    wo = (w + 2 * p - kw) // s + 1
    if h + 2 * p < kh or w + 2 * p < kw or ho < 1 or wo < 1:
        raise ShapeError(
            "conv2d: %dx%d input with kernel %dx%d, padding %d gives no output"
            % (h, w, kh, kw, p)
        )
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)))
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::s, ::s]
    windows = windows[:, :ho, :wo]

    g = spec.groups
    ci = c // g
    co = spec.out_channels // g
    out = np.empty((spec.out_channels, ho, wo))
    for gi in range(g):
        patch = windows[gi * ci : (gi + 1) * ci]
        kernel = spec.weights[gi * co : (gi + 1) * co]
        out[gi * co : (gi + 1) * co] = np.tensordot(
            kernel, patch, axes=([1, 2, 3], [0, 3, 4])
        )
    out += spec.bias[:, None, None]
    return _finite(activate(out, spec.activation), "conv2d")


def transposed_conv2d(x, spec):
    """adjoint of conv2d: every input cell scatters a scaled kernel"""
    x = as_tensor3(x, "transposed_conv2d input")
    if not spec.transposed:
        raise ShapeError("transposed_conv2d got a regular spec")
    c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(
            "transposed_conv2d: input has %d channels, layer expects %d"
            % (c, spec.in_channels)
        )
    kh, kw = spec.kernel_size
    s, p = spec.stride, spec.padding
    hf = (h - 1) * s + kh
    wf = (w - 1) * s + kw
    ho, wo = hf - 2 * p, wf - 2 * p
    if ho < 1 or wo < 1:
        raise ShapeError("transposed_conv2d: padding %d crops away the output" % p)

    g = spec.groups
    ci = c // g
    co = spec.out_channels // g
    full = np.zeros((spec.out_channels, hf, wf))
    for gi in range(g):
        kernel = spec.weights[gi * ci : (gi + 1) * ci]
        # (co, kh, kw, h, w)
        contrib = np.tensordot(kernel, x[gi * ci : (gi + 1) * ci], axes=([0], [0]))
        target = full[gi * co : (gi + 1) * co]
        for i in range(kh):
            for j in range(kw):
                target[:, i : i + (h - 1) * s + 1 : s, j : j + (w - 1) * s + 1 : s] += (
                    contrib[:, i, j]
                )
    out = full[:, p : p + ho, p : p + wo] + spec.bias[:, None, None]
    return _finite(activate(out, spec.activation), "transposed_conv2d")


def bilinear_sample(grid, rows, cols):
    """
    Sample grid (C, H, W) at fractional (rows, cols); corners outside the grid
    read as zero. Returns (C,) + rows.shape.
    """
    grid = np.asarray(grid, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    _, h, w = grid.shape
    r0 = np.floor(rows)
    c0 = np.floor(cols)
    fr = rows - r0
    fc = cols - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)

    out = np.zeros((grid.shape[0],) + rows.shape)
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        rr = r0 + dr
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            cc = c0 + dc
            valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            weight = np.where(valid, wr * wc, 0.0)
            values = grid[:, np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1)]
            out += values * weight
    return out


def cosine(a, b):
    """cosine of two equally shaped tensors taken as flat vectors, 0 if either is zero"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("cosine of %s and %s" % (a.shape, b.shape))
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.dot(a.ravel(), b.ravel()) / denom)
