# -*- coding: utf-8 -*-
"""
Observability-constrained domain alignment.

The collaborator's grid is resampled into the ego frame, its voids are
filled from the ego grid, and a per-cell discriminator is scored with a
binary cross-entropy weighted by where both agents actually observe. The
feature-side gradient passes a gradient reversal layer (scale GRL_GAMMA).
"""

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateWeightingError, ShapeError, ValidationError
from .numerics import ConvSpec, as_tensor3, bilinear_sample, conv2d, he_normal, relu, sigmoid, softmax
from .pointcloud import normalize_yaw
from .weights import require

GRL_GAMMA = -0.1
DISC_HIDDEN = 256

# tolerance, in cells, for snapping resampling coordinates onto the grid
_SNAP = 1e-9

DomainLoss = namedtuple("DomainLoss", ["loss", "grad_logits", "grad_features"])


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.yaw)):
            raise ValidationError("pose must be finite, got %s" % ((self.x, self.y, self.yaw),))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    def compose(self, other):
        """self * other: apply other first, then self"""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )

    def inverse(self):
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.yaw)

    def apply(self, x, y):
        """map local-frame coordinates to the parent frame"""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return self.x + c * x - s * y, self.y + s * x + c * y

    def to_json(self):
        return {"x": self.x, "y": self.y, "yaw": self.yaw}

    @staticmethod
    def from_json(json_pose):
        try:
            return Pose2(
                float(json_pose["x"]), float(json_pose["y"]), float(json_pose.get("yaw", 0.0))
            )
        except (KeyError, TypeError) as e:
            raise ValidationError("pose is missing field %s" % e)


@dataclass(frozen=True)
class ObservabilityMap:
    grid: np.ndarray

    def __post_init__(self):
        grid = as_tensor3(self.grid, "observability map")
        if grid.shape[0] != 1:
            raise ShapeError("observability map must have one channel, got %d" % grid.shape[0])
        if grid.min() < 0.0 or grid.max() > 1.0:
            raise ValidationError("observability map leaves [0, 1]")
        object.__setattr__(self, "grid", grid)


def _grid(value, name):
    if isinstance(value, ObservabilityMap):
        return value.grid
    return as_tensor3(value, name)


def init_foreground_weights(rng, channels):
    half = channels // 2
    return {
        "fg.conv1.weight": he_normal(rng, (half, channels, 3, 3), channels * 9),
        "fg.conv1.bias": np.zeros(half),
        "fg.bn.scale": np.ones(half),
        "fg.bn.shift": np.zeros(half),
        "fg.conv2.weight": he_normal(rng, (1, half, 1, 1), half),
        "fg.conv2.bias": np.zeros(1),
    }


def foreground_estimate(features, weights):
    """Phi: 3x3 conv to C/2, frozen affine, relu, 1x1 conv, sigmoid"""
    features = as_tensor3(features, "features")
    c = features.shape[0]
    half = c // 2
    w1, b1, scale, shift, w2, b2 = require(
        weights,
        [
            "fg.conv1.weight",
            "fg.conv1.bias",
            "fg.bn.scale",
            "fg.bn.shift",
            "fg.conv2.weight",
            "fg.conv2.bias",
        ],
        [(half, c, 3, 3), (half,), (half,), (half,), (1, half, 1, 1), (1,)],
    )
    hidden = conv2d(features, ConvSpec(w1, b1, padding=1))
    hidden = relu(hidden * scale[:, None, None] + shift[:, None, None])
    out = conv2d(hidden, ConvSpec(w2, b2, activation="sigmoid"))
    return ObservabilityMap(out)


def transform_to_ego(collab, collab_pose, ego_pose, spec):
    """
    Resample a collaborator grid into the ego frame.

    Each ego cell center goes ego -> world -> collaborator frame and is read
    bilinearly there. Returns (grid, valid) where valid is 1xHxW.
    """
    grid = _grid(collab, "collaborator grid")
    h, w = spec.height, spec.width
    if grid.shape[1:] != (h, w):
        raise ShapeError("grid %s does not match the BEV spec %dx%d" % (grid.shape[1:], h, w))
    xs, ys = spec.cell_centers()
    wx, wy = ego_pose.apply(xs, ys)
    cx, cy = collab_pose.inverse().apply(wx, wy)
    rows, cols = spec.continuous_index(cx, cy)
    rows = _snap(rows)
    cols = _snap(cols)
    valid = (rows >= 0) & (rows <= h - 1) & (cols >= 0) & (cols <= w - 1)
    out = bilinear_sample(grid, rows, cols) * valid
    return out, valid.astype(np.float64)[None]


def _snap(index):
    nearest = np.round(index)
    return np.where(np.abs(index - nearest) <= _SNAP, nearest, index)


def complete_voids(h_transformed, m_transformed, valid, h_ego, m_ego):
    """exact selection: collaborator where valid, ego elsewhere"""
    h_transformed = as_tensor3(h_transformed, "transformed features")
    h_ego = as_tensor3(h_ego, "ego features")
    m_transformed = _grid(m_transformed, "transformed map")
    m_ego = _grid(m_ego, "ego map")
    valid = as_tensor3(valid, "valid mask")
    if h_transformed.shape != h_ego.shape or m_transformed.shape != m_ego.shape:
        raise ShapeError("void completion needs matching collaborator and ego shapes")
    if valid.shape[1:] != h_ego.shape[1:] or m_ego.shape[1:] != h_ego.shape[1:]:
        raise ShapeError("valid mask and maps must share the feature grid")
    keep = valid > 0.5
    return np.where(keep, h_transformed, h_ego), np.where(keep, m_transformed, m_ego)


def observability_weighting(m_ego, m_collab):
    """per cell: the smaller of the two softmax probabilities over the pair"""
    m_ego = _grid(m_ego, "ego map")
    m_collab = _grid(m_collab, "collaborator map")
    if m_ego.shape != m_collab.shape:
        raise ShapeError("maps differ: %s vs %s" % (m_ego.shape, m_collab.shape))
    pair = softmax(np.concatenate([m_ego, m_collab], axis=0), axis=0)
    return pair.min(axis=0, keepdims=True)


@dataclass(frozen=True)
class DiscriminatorSpec:
    conv1: ConvSpec
    conv2: ConvSpec

    def __post_init__(self):
        for name, layer in (("conv1", self.conv1), ("conv2", self.conv2)):
            if layer.kernel_size != (1, 1) or layer.transposed:
                raise ShapeError("discriminator %s must be a 1x1 convolution" % name)
        if self.conv2.out_channels != 1:
            raise ShapeError("discriminator emits one logit channel")
        if self.conv2.in_channels != self.conv1.out_channels:
            raise ShapeError("discriminator layers do not chain")

    @classmethod
    def from_weights(cls, weights):
        w1, b1, w2, b2 = require(
            weights,
            ["disc.conv1.weight", "disc.conv1.bias", "disc.conv2.weight", "disc.conv2.bias"],
        )
        return cls(ConvSpec(w1, b1, activation="relu"), ConvSpec(w2, b2))


def init_discriminator_weights(rng, channels):
    return {
        "disc.conv1.weight": he_normal(rng, (DISC_HIDDEN, channels, 1, 1), channels),
        "disc.conv1.bias": np.zeros(DISC_HIDDEN),
        "disc.conv2.weight": he_normal(rng, (1, DISC_HIDDEN, 1, 1), DISC_HIDDEN),
        "disc.conv2.bias": np.zeros(1),
    }


def discriminator_forward(features, spec):
    features = as_tensor3(features, "features")
    if features.shape[0] != spec.conv1.in_channels:
        raise ShapeError(
            "discriminator expects %d channels, got %d"
            % (spec.conv1.in_channels, features.shape[0])
        )
    return conv2d(conv2d(features, spec.conv1), spec.conv2)


def domain_loss_and_grads(logits, label, weights):
    """
    Observability-weighted BCE of the domain logits against label 0 (ego) or
    1 (collaborator). Returns DomainLoss(loss, grad_logits, grad_features);
    grad_features is what the gradient reversal layer hands the extractor.
    """
    if label not in (0, 1):
        raise ValidationError("domain label must be 0 or 1, got %r" % (label,))
    logits = np.asarray(logits, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.size != logits.size:
        raise ShapeError("weights have %d entries, logits %d" % (w.size, logits.size))
    w = w.reshape(logits.shape)
    if (w < 0).any() or not np.isfinite(w).all():
        raise ValidationError("domain weights must be finite and non-negative")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateWeightingError("observability weights sum to zero")
    # BCE(sigmoid(x), z) = softplus(x) - z * x
    bce = np.logaddexp(0.0, logits) - label * logits
    loss = float(np.sum(w * bce) / total)
    grad = w * (sigmoid(logits) - label) / total
    return DomainLoss(loss, grad, grad * GRL_GAMMA)


def write_pgm(stream, grid):
    """8-bit binary PGM of a [0, 1] map; row 0 of the grid is the top image row"""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim == 3:
        if grid.shape[0] != 1:
            raise ShapeError("pgm export takes one channel, got %d" % grid.shape[0])
        grid = grid[0]
    pixels = np.round(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pixels.shape
    stream.write(b"P5\n%d %d\n255\n" % (w, h))
    stream.write(pixels.tobytes())


def export_pgm(path, grid):
    with open(path, "wb") as f:
        write_pgm(f, grid)
