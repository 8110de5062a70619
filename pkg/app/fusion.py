# -*- coding: utf-8 -*-
"""
Instance-focused aggregation and multi-agent fusion.

Each agent's BEV features are split by its foreground map, the foreground is
enhanced with fixed-construction 3x3 kernels, blended back under learned
verification weights, and the refined grids are folded together ego first.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bev import rasterize_boxes
from .exceptions import ConfigError, ShapeError, ValidationError
from .numerics import ConvSpec, as_tensor3, conv2d, he_normal
from .weights import require

STRUCT_BANKS = ("vanilla", "cd", "hd", "vd", "ad")
VERIFICATION_MODES = ("per_channel", "single")
COMBINE_MODES = ("add", "concat")
REDUCTION = 16

FOCAL_ALPHA = 0.25
POS_WEIGHT = 2.0
NEG_WEIGHT = 1.0


def split_foreground(h, m):
    """(H * M, H * (1 - M)) with M broadcast over channels"""
    h = as_tensor3(h, "features")
    m = getattr(m, "grid", m)
    m = as_tensor3(m, "foreground map")
    if m.shape != (1,) + h.shape[1:]:
        raise ShapeError("foreground map %s does not fit features %s" % (m.shape, h.shape))
    fore = h * m
    return fore, h - fore


def center_surround(raw):
    k = np.array(raw, dtype=np.float64)
    k[..., 1, 1] = 0.0
    k[..., 1, 1] = -k.sum(axis=(-2, -1))
    return k


def horizontal_difference(raw):
    raw = np.asarray(raw, dtype=np.float64)
    k = np.zeros(raw.shape)
    k[..., :, 0] = raw[..., :, 0]
    k[..., :, 2] = -raw[..., :, 0]
    return k


def vertical_difference(raw):
    raw = np.asarray(raw, dtype=np.float64)
    k = np.zeros(raw.shape)
    k[..., 0, :] = raw[..., 0, :]
    k[..., 2, :] = -raw[..., 0, :]
    return k


def angular_difference(raw):
    raw = np.asarray(raw, dtype=np.float64)
    return raw - np.rot90(raw, axes=(-2, -1))


@dataclass(frozen=True)
class StructKernels:
    """five 3x3 banks (out, in, 3, 3) and their biases, constructions already applied"""

    vanilla: np.ndarray
    cd: np.ndarray
    hd: np.ndarray
    vd: np.ndarray
    ad: np.ndarray
    biases: Optional[np.ndarray] = None  # (5, out)

    def __post_init__(self):
        shape = np.shape(self.vanilla)
        for name in STRUCT_BANKS:
            bank = np.asarray(getattr(self, name), dtype=np.float64)
            if bank.ndim != 4 or bank.shape[2:] != (3, 3) or bank.shape != shape:
                raise ShapeError("struct bank %s has shape %s" % (name, bank.shape))
            object.__setattr__(self, name, bank)
        biases = self.biases
        if biases is None:
            biases = np.zeros((5, shape[0]))
        biases = np.asarray(biases, dtype=np.float64)
        if biases.shape != (5, shape[0]):
            raise ShapeError("struct biases must be (5, %d), got %s" % (shape[0], biases.shape))
        object.__setattr__(self, "biases", biases)

    @classmethod
    def from_raw(cls, vanilla, raw_cd, raw_hd, raw_vd, raw_ad, biases=None):
        return cls(
            vanilla,
            center_surround(raw_cd),
            horizontal_difference(raw_hd),
            vertical_difference(raw_vd),
            angular_difference(raw_ad),
            biases,
        )

    @classmethod
    def from_weights(cls, weights):
        names = []
        for bank in STRUCT_BANKS:
            names += ["ifam.struct.%s.weight" % bank, "ifam.struct.%s.bias" % bank]
        tensors = require(weights, names)
        return cls.from_raw(*tensors[0::2], biases=np.stack(tensors[1::2]))

    @property
    def banks(self):
        return [getattr(self, name) for name in STRUCT_BANKS]

    def layers(self):
        return [ConvSpec(bank, bias, padding=1) for bank, bias in zip(self.banks, self.biases)]

    def fused(self):
        """one convolution equal to the sum of the five"""
        return ConvSpec(sum(self.banks), self.biases.sum(axis=0), padding=1)


def struct_conv(h_fore, kernels, fused=True):
    if fused:
        return conv2d(h_fore, kernels.fused())
    return sum(conv2d(h_fore, layer) for layer in kernels.layers())


def channel_shuffle(x, groups):
    """interleave channel groups: with 2 groups, (0, 1, 2, 3) -> (0, 2, 1, 3)"""
    x = as_tensor3(x, "shuffle input")
    c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ConfigError("ifam.shuffle_groups", "%d does not divide %d channels" % (groups, c))
    return x.reshape(groups, c // groups, h, w).transpose(1, 0, 2, 3).reshape(c, h, w)


def channel_unshuffle(x, groups):
    x = as_tensor3(x, "shuffle input")
    c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ConfigError("ifam.shuffle_groups", "%d does not divide %d channels" % (groups, c))
    return x.reshape(c // groups, groups, h, w).transpose(1, 0, 2, 3).reshape(c, h, w)


@dataclass(frozen=True)
class VerificationSpec:
    spatial: ConvSpec
    channel1: ConvSpec
    channel2: ConvSpec
    gconv: ConvSpec
    shuffle_groups: int = 4

    def __post_init__(self):
        if self.spatial.in_channels != 2 or self.spatial.out_channels != 1:
            raise ShapeError("spatial attention maps [max, mean] to one channel")
        cat = self.channel1.in_channels
        if self.channel2.out_channels != cat:
            raise ShapeError("channel attention must return %d channels" % cat)
        if self.gconv.in_channels != 2 * cat:
            raise ShapeError(
                "group conv reads %d channels, expected %d" % (self.gconv.in_channels, 2 * cat)
            )
        if self.shuffle_groups < 1 or (2 * cat) % self.shuffle_groups:
            raise ConfigError(
                "ifam.shuffle_groups", "%d does not divide %d channels" % (self.shuffle_groups, 2 * cat)
            )

    @property
    def channels(self):
        """C of the features being verified"""
        return self.channel1.in_channels // 2

    @classmethod
    def from_weights(cls, weights, groups=8, shuffle_groups=4, mode="per_channel"):
        if mode not in VERIFICATION_MODES:
            raise ConfigError("ifam.verification", "must be one of %s" % (VERIFICATION_MODES,))
        head = "gconv" if mode == "per_channel" else "single"
        names = [
            "ifam.verif.spatial.weight", "ifam.verif.spatial.bias",
            "ifam.verif.channel1.weight", "ifam.verif.channel1.bias",
            "ifam.verif.channel2.weight", "ifam.verif.channel2.bias",
            "ifam.verif.%s.weight" % head, "ifam.verif.%s.bias" % head,
        ]
        ws, bs, w1, b1, w2, b2, wg, bg = require(weights, names)
        if mode == "per_channel" and (wg.shape[0] % groups or wg.shape[1] * groups != 2 * w1.shape[1]):
            raise ConfigError(
                "ifam.groups", "%d groups do not fit verification weights %s" % (groups, wg.shape)
            )
        return cls(
            ConvSpec(ws, bs, padding=1, activation="sigmoid"),
            ConvSpec(w1, b1, activation="relu"),
            ConvSpec(w2, b2, activation="sigmoid"),
            ConvSpec(wg, bg, groups=groups if mode == "per_channel" else 1, activation="sigmoid"),
            shuffle_groups,
        )


def verification_weights(h_fore, h_enh, spec):
    """C x H x W weights in (0, 1); one channel for the single variant"""
    h_fore = as_tensor3(h_fore, "foreground")
    h_enh = as_tensor3(h_enh, "enhanced")
    if h_fore.shape != h_enh.shape:
        raise ShapeError("foreground %s vs enhanced %s" % (h_fore.shape, h_enh.shape))
    h_cat = np.concatenate([h_fore, h_enh])
    pooled = np.stack([h_cat.max(axis=0), h_cat.mean(axis=0)])
    w_spatial = conv2d(pooled, spec.spatial)
    gap = h_cat.mean(axis=(1, 2))[:, None, None]
    w_channel = conv2d(conv2d(gap, spec.channel1), spec.channel2)
    w_init = w_spatial + w_channel
    stacked = channel_shuffle(np.concatenate([h_cat, w_init]), spec.shuffle_groups)
    return conv2d(stacked, spec.gconv)


def aggregate_instance(h_fore, h_enh, h_back, w_verif, eps, proj, combine="add"):
    """
    B = W * H_fore + (1 - W) * H_enh; H_verif = proj(B + H_fore + H_enh) (or
    of their concatenation); refined = H_verif + eps * H_back.
    """
    if combine not in COMBINE_MODES:
        raise ConfigError("ifam.combine", "must be one of %s" % (COMBINE_MODES,))
    h_fore = as_tensor3(h_fore, "foreground")
    h_enh = as_tensor3(h_enh, "enhanced")
    h_back = as_tensor3(h_back, "background")
    w_verif = as_tensor3(w_verif, "verification weights")
    blend = w_verif * h_fore + (1.0 - w_verif) * h_enh
    if combine == "add":
        merged = blend + h_fore + h_enh
    else:
        merged = np.concatenate([blend, h_fore, h_enh])
    return conv2d(merged, proj) + float(eps) * h_back


def aggregation_layer(weights, combine="add"):
    if combine not in COMBINE_MODES:
        raise ConfigError("ifam.combine", "must be one of %s" % (COMBINE_MODES,))
    w, b = require(weights, ["ifam.agg.%s.weight" % combine, "ifam.agg.%s.bias" % combine])
    return ConvSpec(w, b)


def fuse_agents(features, weights):
    """left fold, ego first: state = conv1x1([state, next])"""
    features = [as_tensor3(f, "agent features") for f in features]
    if not features:
        raise ValidationError("no agent features to fuse")
    if isinstance(weights, ConvSpec):
        layer = weights
    else:
        w, b = require(weights, ["ifam.fuse.weight", "ifam.fuse.bias"])
        layer = ConvSpec(w, b)
    state = features[0]
    for other in features[1:]:
        if other.shape != state.shape:
            raise ShapeError("agent features differ: %s vs %s" % (state.shape, other.shape))
        state = conv2d(np.concatenate([state, other]), layer)
    return state


def ifam_refine(h, m, weights, groups=8, shuffle_groups=4, verification="per_channel",
                combine="add"):
    """one agent through split, StructConv, verification and aggregation"""
    h_fore, h_back = split_foreground(h, m)
    h_enh = struct_conv(h_fore, StructKernels.from_weights(weights))
    spec = VerificationSpec.from_weights(weights, groups, shuffle_groups, verification)
    w_verif = verification_weights(h_fore, h_enh, spec)
    (eps,) = require(weights, ["ifam.eps"], [(1,)])
    return aggregate_instance(
        h_fore, h_enh, h_back, w_verif, eps[0], aggregation_layer(weights, combine), combine
    )


def focal_terms(p, y):
    """
    Per-cell focal terms and their derivative in p:
    y = 1: -a (1 - p)^2 log p, y = 0: -(1 - a) p^2 log(1 - p).
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError("prediction %s vs target %s" % (p.shape, y.shape))
    if p.min() <= 0.0 or p.max() >= 1.0:
        raise ValidationError("foreground prediction must lie in (0, 1)")
    log_p, log_q = np.log(p), np.log1p(-p)
    q = 1.0 - p
    pos = -FOCAL_ALPHA * q * q * log_p
    neg = -(1.0 - FOCAL_ALPHA) * p * p * log_q
    d_pos = FOCAL_ALPHA * (2.0 * q * log_p - q * q / p)
    d_neg = (1.0 - FOCAL_ALPHA) * (p * p / q - 2.0 * p * log_q)
    return y * pos + (1.0 - y) * neg, y * d_pos + (1.0 - y) * d_neg


def focal_loss(p, y):
    """weighted focal loss against a binary target, normalised by max(sum y, 1)"""
    terms, dterms = focal_terms(p, y)
    y = np.asarray(y, dtype=np.float64)
    w = (POS_WEIGHT * y + NEG_WEIGHT * (1.0 - y)) / max(float(y.sum()), 1.0)
    return float(np.sum(w * terms)), w * dterms


def foreground_loss(m_pred, boxes, spec):
    """focal loss of a foreground map against the rasterised box footprints"""
    p = getattr(m_pred, "grid", m_pred)
    p = as_tensor3(p, "foreground map")
    if p.shape != (1, spec.height, spec.width):
        raise ShapeError("foreground map %s does not fit the BEV spec" % (p.shape,))
    return focal_loss(p, rasterize_boxes(boxes, spec))


def init_ifam_weights(rng, channels=384, groups=8, eps=0.1):
    c = channels
    weights = {}
    for bank in STRUCT_BANKS:
        weights["ifam.struct.%s.weight" % bank] = he_normal(rng, (c, c, 3, 3), c * 9 * 5)
        weights["ifam.struct.%s.bias" % bank] = np.zeros(c)
    hidden = max(2 * c // REDUCTION, 1)
    weights.update({
        "ifam.verif.spatial.weight": he_normal(rng, (1, 2, 3, 3), 18),
        "ifam.verif.spatial.bias": np.zeros(1),
        "ifam.verif.channel1.weight": he_normal(rng, (hidden, 2 * c, 1, 1), 2 * c),
        "ifam.verif.channel1.bias": np.zeros(hidden),
        "ifam.verif.channel2.weight": he_normal(rng, (2 * c, hidden, 1, 1), hidden),
        "ifam.verif.channel2.bias": np.zeros(2 * c),
        "ifam.verif.gconv.weight": he_normal(rng, (c, 4 * c // groups, 1, 1), 4 * c // groups),
        "ifam.verif.gconv.bias": np.zeros(c),
        "ifam.verif.single.weight": he_normal(rng, (1, 4 * c, 1, 1), 4 * c),
        "ifam.verif.single.bias": np.zeros(1),
    })
    eye = np.eye(c)[:, :, None, None]
    weights["ifam.agg.add.weight"] = eye / 3.0
    weights["ifam.agg.add.bias"] = np.zeros(c)
    weights["ifam.agg.concat.weight"] = np.concatenate([eye, eye, eye], axis=1) / 3.0
    weights["ifam.agg.concat.bias"] = np.zeros(c)
    weights["ifam.fuse.weight"] = np.concatenate([eye, eye], axis=1) * 0.5
    weights["ifam.fuse.bias"] = np.zeros(c)
    weights["ifam.eps"] = np.full(1, eps)
    return weights
