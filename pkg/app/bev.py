# -*- coding: utf-8 -*-
"""
Bird's-eye-view featurization: a deterministic pillar encoder, a frozen
three-scale convolutional backbone, and the deconvolution projection that
brings the three scales back to one 384-channel grid.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError
from .numerics import (
    ConvSpec,
    as_tensor3,
    conv2d,
    he_normal,
    make_rng,
    transposed_conv2d,
)
from .weights import require

PILLAR_CHANNELS = 8
SCALE_CHANNELS = (64, 128, 256)
PROJECTED_CHANNELS = 128

# (kernel, stride, padding) per scale; kernel = stride above stride 1
DECONV_LAYOUT = ((3, 1, 1), (2, 2, 0), (4, 4, 0))


@dataclass(frozen=True)
class BevSpec:
    cell_size: float = 0.4
    x_range: tuple = (-12.8, 12.8)
    y_range: tuple = (-12.8, 12.8)

    def __post_init__(self):
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        object.__setattr__(self, "y_range", tuple(float(v) for v in self.y_range))
        if self.cell_size <= 0:
            raise ConfigError("bev.cell_size", "must be positive")
        for key, (lo, hi) in (("bev.x_range", self.x_range), ("bev.y_range", self.y_range)):
            cells = (hi - lo) / self.cell_size
            if hi <= lo or abs(cells - round(cells)) > 1e-6:
                raise ConfigError(key, "extent must be a positive multiple of the cell size")
            if round(cells) % 4:
                raise ConfigError(key, "must span a multiple of 4 cells, got %d" % round(cells))

    @property
    def width(self):
        return int(round((self.x_range[1] - self.x_range[0]) / self.cell_size))

    @property
    def height(self):
        return int(round((self.y_range[1] - self.y_range[0]) / self.cell_size))

    @property
    def origin(self):
        """ego-frame coordinates of the lower-left corner of cell (0, 0)"""
        return self.x_range[0], self.y_range[0]

    def cell_centers(self, level=0):
        """(xs, ys) meshgrids shaped (H, W) at scale 2**level"""
        cell = self.cell_size * 2 ** level
        w, h = self.width >> level, self.height >> level
        xs = self.x_range[0] + (np.arange(w) + 0.5) * cell
        ys = self.y_range[0] + (np.arange(h) + 0.5) * cell
        return np.meshgrid(xs, ys)

    def continuous_index(self, x, y, level=0):
        """(row, col) of a metric position; cell centers land on integers"""
        cell = self.cell_size * 2 ** level
        col = (np.asarray(x) - self.x_range[0]) / cell - 0.5
        row = (np.asarray(y) - self.y_range[0]) / cell - 0.5
        return row, col

    @classmethod
    def from_config(cls, config):
        return cls(
            cell_size=config["BEV_CELL_SIZE"],
            x_range=tuple(config["BEV_X_RANGE"]),
            y_range=tuple(config["BEV_Y_RANGE"]),
        )


@dataclass(frozen=True)
class MultiScaleFeatures:
    large: np.ndarray
    middle: np.ndarray
    small: np.ndarray

    def __post_init__(self):
        shapes = []
        for name, value, channels in zip(
            ("large", "middle", "small"), self.scales, SCALE_CHANNELS
        ):
            value = as_tensor3(value, "F_" + name)
            if value.shape[0] != channels:
                raise ShapeError(
                    "F_%s has %d channels, expected %d" % (name, value.shape[0], channels)
                )
            object.__setattr__(self, name, value)
            shapes.append(value.shape[1:])
        (h, w), (hm, wm), (hs, ws) = shapes
        if (hm, wm) != (h // 2, w // 2) or (hs, ws) != (h // 4, w // 4) or h % 4 or w % 4:
            raise ShapeError("scale sizes %s do not halve per scale" % shapes)

    @property
    def scales(self):
        return [self.large, self.middle, self.small]

    @classmethod
    def from_scales(cls, scales):
        large, middle, small = scales
        return cls(large, middle, small)


def pillar_encode(cloud, spec):
    """
    Eight statistics per BEV cell: occupancy, log(1 + count), mean/max/min z,
    z spread, mean intensity and mean planar distance to the cell center.
    """
    h, w = spec.height, spec.width
    out = np.zeros((PILLAR_CHANNELS, h, w))
    if len(cloud) == 0:
        return out
    x, y, z, intensity = cloud.points.T
    x0, y0 = spec.origin
    col = np.floor((x - x0) / spec.cell_size).astype(np.int64)
    row = np.floor((y - y0) / spec.cell_size).astype(np.int64)
    valid = (col >= 0) & (col < w) & (row >= 0) & (row < h)
    if not valid.any():
        return out
    col, row, x, y, z, intensity = (a[valid] for a in (col, row, x, y, z, intensity))
    flat = row * w + col
    n = h * w

    count = np.bincount(flat, minlength=n).astype(np.float64)
    occupied = count > 0
    safe = np.where(occupied, count, 1.0)
    max_z = np.full(n, -np.inf)
    min_z = np.full(n, np.inf)
    np.maximum.at(max_z, flat, z)
    np.minimum.at(min_z, flat, z)
    max_z = np.where(occupied, max_z, 0.0)
    min_z = np.where(occupied, min_z, 0.0)
    cx = x0 + (col + 0.5) * spec.cell_size
    cy = y0 + (row + 0.5) * spec.cell_size
    offset = np.hypot(x - cx, y - cy)

    stats = [
        occupied.astype(np.float64),
        np.log1p(count),
        np.bincount(flat, weights=z, minlength=n) / safe,
        max_z,
        min_z,
        max_z - min_z,
        np.bincount(flat, weights=intensity, minlength=n) / safe,
        np.bincount(flat, weights=offset, minlength=n) / safe,
    ]
    for channel, stat in enumerate(stats):
        out[channel] = np.where(occupied, stat, 0.0).reshape(h, w)
    return out


def evidence_map(pillars, clearance):
    """1 where a pillar holds points at least `clearance` above the ground"""
    pillars = as_tensor3(pillars, "pillars")
    hit = (pillars[0] > 0) & (pillars[3] >= clearance)
    return hit.astype(np.float64)[None]


def rasterize_boxes(boxes, spec, margin=0.0, level=0):
    """closed box footprints as a 1xHxW map; a cell counts when its center is inside"""
    xs, ys = spec.cell_centers(level)
    grid = np.zeros(xs.shape, dtype=bool)
    xy = np.stack([xs.ravel(), ys.ravel()], axis=1)
    for box in boxes:
        grid |= box.footprint_contains(xy, margin).reshape(xs.shape)
    return grid.astype(np.float64)[None]


def init_backbone_weights(rng, in_channels=PILLAR_CHANNELS):
    """He-scaled frozen convolutions; biases start at zero"""
    weights = {}
    prev = in_channels
    for i, channels in enumerate(SCALE_CHANNELS, start=1):
        shape = (channels, prev, 3, 3)
        weights["backbone.conv%d.weight" % i] = he_normal(rng, shape, prev * 9)
        weights["backbone.conv%d.bias" % i] = np.zeros(channels)
        prev = channels
    return weights


def backbone_forward(pillars, weights="analytic", seed=0):
    """
    Three scales: 64xHxW, 128x(H/2)x(W/2), 256x(H/4)x(W/4).

    `weights` is a mapping of named tensors, or "analytic" for the frozen
    seed-derived stack.
    """
    pillars = as_tensor3(pillars, "pillars")
    _, h, w = pillars.shape
    if h % 4 or w % 4:
        raise ShapeError("backbone needs H and W divisible by 4, got %dx%d" % (h, w))
    if isinstance(weights, str):
        if weights != "analytic":
            raise ShapeError("unknown backbone weight mode %r" % weights)
        weights = init_backbone_weights(make_rng(seed, 1), pillars.shape[0])
    names = []
    for i in range(1, 4):
        names += ["backbone.conv%d.weight" % i, "backbone.conv%d.bias" % i]
    tensors = require(weights, names)

    x = pillars
    scales = []
    for i in range(3):
        x = conv2d(
            x,
            ConvSpec(
                tensors[2 * i],
                tensors[2 * i + 1],
                stride=1 if i == 0 else 2,
                padding=1,
                activation="relu",
            ),
        )
        scales.append(x)
    return MultiScaleFeatures.from_scales(scales)


def init_bevproj_weights(rng):
    weights = {}
    for i, (channels, (k, s, _)) in enumerate(zip(SCALE_CHANNELS, DECONV_LAYOUT), start=1):
        shape = (channels, PROJECTED_CHANNELS, k, k)
        weights["bevproj.deconv%d.weight" % i] = he_normal(
            rng, shape, channels * k * k / float(s * s)
        )
        weights["bevproj.deconv%d.bias" % i] = np.zeros(PROJECTED_CHANNELS)
    return weights


def bev_project(ms, weights):
    """upsample every scale to 128xHxW and stack them (large, middle, small)"""
    names = []
    for i in range(1, 4):
        names += ["bevproj.deconv%d.weight" % i, "bevproj.deconv%d.bias" % i]
    shapes = []
    for channels, (k, _, _) in zip(SCALE_CHANNELS, DECONV_LAYOUT):
        shapes += [(channels, PROJECTED_CHANNELS, k, k), (PROJECTED_CHANNELS,)]
    tensors = require(weights, names, shapes)

    h, w = ms.large.shape[1:]
    outputs = []
    for i, (scale, (_, s, p)) in enumerate(zip(ms.scales, DECONV_LAYOUT)):
        spec = ConvSpec(tensors[2 * i], tensors[2 * i + 1], stride=s, padding=p, transposed=True)
        up = transposed_conv2d(scale, spec)
        if up.shape[1:] != (h, w):
            raise ShapeError("scale %d projects to %s, expected %s" % (i, up.shape[1:], (h, w)))
        outputs.append(up)
    return np.concatenate(outputs, axis=0)
