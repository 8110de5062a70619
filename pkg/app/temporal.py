# -*- coding: utf-8 -*-
"""
Progressive temporal alignment of delayed collaborator features.

Stage 1 runs on the collaborator: the two most recent frames give a motion
field that pushes the latest frame one sensor period forward. Stage 2 runs
on the ego side: a second field, scaled by the temporal factor xi, covers
the transmission delay. Everything is done independently at each of the
three backbone scales.
"""

import logging
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError, ValidationError
from .numerics import (
    ConvSpec,
    MlpSpec,
    as_tensor3,
    bilinear_sample,
    conv2d,
    he_normal,
    mlp_forward,
    relu,
)
from .weights import require

logger = logging.getLogger(__name__)

XI_MODES = ("learned", "oracle")
STAGE2_SOURCES = ("latest", "inter")
STAGE2_FIELDS = ("scaled", "literal")

MOTION_HIDDEN = 32
SAMP_BIAS = 4.0
XI_CHANNELS = 16

PtamResult = namedtuple("PtamResult", ["inter", "final", "stage1", "stage2", "xi"])
TemporalLoss = namedtuple("TemporalLoss", ["per_scale", "total", "grads", "diagnostics"])


@dataclass(frozen=True)
class MotionField:
    """displacement in cells (channel 0 along width, channel 1 along height) plus sampling weight"""

    dp: np.ndarray
    w_samp: np.ndarray

    def __post_init__(self):
        dp = as_tensor3(self.dp, "motion field")
        w = as_tensor3(self.w_samp, "sampling weight")
        if dp.shape[0] != 2 or w.shape[0] != 1 or dp.shape[1:] != w.shape[1:]:
            raise ShapeError("motion field %s / sampling weight %s" % (dp.shape, w.shape))
        if w.min() < 0.0 or w.max() > 1.0:
            raise ValidationError("sampling weight leaves [0, 1]")
        object.__setattr__(self, "dp", dp)
        object.__setattr__(self, "w_samp", w)

    @property
    def shape(self):
        return self.dp.shape[1:]

    @classmethod
    def zeros(cls, h, w):
        return cls(np.zeros((2, h, w)), np.ones((1, h, w)))

    @classmethod
    def constant(cls, dx, dy, h, w):
        dp = np.empty((2, h, w))
        dp[0] = dx
        dp[1] = dy
        return cls(dp, np.ones((1, h, w)))


@dataclass(frozen=True)
class DelayContext:
    tau: float
    dt: float = 0.1
    mode: str = "oracle"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("scenario.dt", "sensor period must be positive")
        if not self.tau >= 0:
            raise ConfigError("ptam.tau", "delay must be non-negative")
        if self.mode not in XI_MODES:
            raise ConfigError("ptam.xi_mode", "must be one of %s" % (XI_MODES,))

    @property
    def oracle_xi(self):
        return self.tau / self.dt

    @property
    def periods(self):
        """delay in sensor periods"""
        return self.tau / self.dt


@dataclass(frozen=True)
class MotionEstimatorSpec:
    encoder: ConvSpec
    flow: ConvSpec
    samp: ConvSpec

    def __post_init__(self):
        if self.flow.out_channels != 2:
            raise ShapeError("flow head must emit 2 channels")
        if self.samp.out_channels != 1 or self.samp.activation != "sigmoid":
            raise ShapeError("sampling head must emit 1 sigmoid channel")
        if self.flow.in_channels != 2 * self.encoder.out_channels:
            raise ShapeError("heads read both encoded pairs")

    @classmethod
    def from_weights(cls, weights, scale):
        prefix = "ptam.motion.s%d." % scale
        names = [prefix + n for n in (
            "enc.weight", "enc.bias", "flow.weight", "flow.bias", "samp.weight", "samp.bias"
        )]
        we, be, wf, bf, ws, bs = require(weights, names)
        return cls(
            ConvSpec(we, be, padding=1, activation="relu"),
            ConvSpec(wf, bf, padding=1),
            ConvSpec(ws, bs, padding=1, activation="sigmoid"),
        )


@dataclass(frozen=True)
class XiPredictorSpec:
    stem: ConvSpec
    res1: ConvSpec
    res2: ConvSpec
    mlp: MlpSpec
    embed_base: float = 1.0e4

    def __post_init__(self):
        if self.stem.in_channels != 2:
            raise ShapeError("xi stem reads the 2-channel motion difference")
        c = self.stem.out_channels
        if self.res1.in_channels != c or self.res2.out_channels != c:
            raise ShapeError("residual block must keep %d channels" % c)
        widths = self.mlp.widths
        if not widths or widths[0] != 2 * c or widths[-1] != 1:
            raise ShapeError("xi mlp must map %d -> 1, got widths %s" % (2 * c, widths))

    @classmethod
    def from_weights(cls, weights, embed_base=1.0e4):
        names = [
            "ptam.xi.stem.weight", "ptam.xi.stem.bias",
            "ptam.xi.res1.weight", "ptam.xi.res1.bias",
            "ptam.xi.res2.weight", "ptam.xi.res2.bias",
            "ptam.xi.mlp1.weight", "ptam.xi.mlp1.bias",
            "ptam.xi.mlp2.weight", "ptam.xi.mlp2.bias",
        ]
        ws, bs, w1, b1, w2, b2, m1, c1, m2, c2 = require(weights, names)
        return cls(
            ConvSpec(ws, bs, padding=1, activation="relu"),
            ConvSpec(w1, b1, padding=1, activation="relu"),
            ConvSpec(w2, b2, padding=1),
            MlpSpec([(m1, c1), (m2, c2)]),
            embed_base,
        )


def init_motion_weights(rng, channels=(64, 128, 256)):
    """encoders random; both heads zero so untrained fields are (0, sigmoid(4))"""
    weights = {}
    for scale, c in enumerate(channels):
        prefix = "ptam.motion.s%d." % scale
        weights[prefix + "enc.weight"] = he_normal(rng, (MOTION_HIDDEN, 2 * c, 3, 3), 2 * c * 9)
        weights[prefix + "enc.bias"] = np.zeros(MOTION_HIDDEN)
        weights[prefix + "flow.weight"] = np.zeros((2, 2 * MOTION_HIDDEN, 3, 3))
        weights[prefix + "flow.bias"] = np.zeros(2)
        weights[prefix + "samp.weight"] = np.zeros((1, 2 * MOTION_HIDDEN, 3, 3))
        weights[prefix + "samp.bias"] = np.full(1, SAMP_BIAS)
    return weights


def init_xi_weights(rng):
    """the output layer starts at zero weight and bias 1: one sensor period"""
    c = XI_CHANNELS
    return {
        "ptam.xi.stem.weight": he_normal(rng, (c, 2, 3, 3), 18),
        "ptam.xi.stem.bias": np.zeros(c),
        "ptam.xi.res1.weight": he_normal(rng, (c, c, 3, 3), c * 9),
        "ptam.xi.res1.bias": np.zeros(c),
        "ptam.xi.res2.weight": he_normal(rng, (c, c, 3, 3), c * 9),
        "ptam.xi.res2.bias": np.zeros(c),
        "ptam.xi.mlp1.weight": he_normal(rng, (2 * c, 2 * c), 2 * c),
        "ptam.xi.mlp1.bias": np.zeros(2 * c),
        "ptam.xi.mlp2.weight": np.zeros((1, 2 * c)),
        "ptam.xi.mlp2.bias": np.ones(1),
    }


def estimate_motion(f_latest, f_prev, weights, scale=0):
    """
    Displacement and sampling weight from two consecutive frames.

    The frame difference is paired with each frame, both pairs go through the
    shared encoder, and the heads read the concatenated encodings.
    """
    f_latest = as_tensor3(f_latest, "latest frame")
    f_prev = as_tensor3(f_prev, "previous frame")
    if f_latest.shape != f_prev.shape:
        raise ShapeError("frames differ: %s vs %s" % (f_latest.shape, f_prev.shape))
    spec = weights if isinstance(weights, MotionEstimatorSpec) else (
        MotionEstimatorSpec.from_weights(weights, scale)
    )
    if spec.encoder.in_channels != 2 * f_latest.shape[0]:
        raise ShapeError(
            "motion encoder for scale %d expects %d channels per frame, got %d"
            % (scale, spec.encoder.in_channels // 2, f_latest.shape[0])
        )
    diff = f_latest - f_prev
    encoded = np.concatenate(
        [
            conv2d(np.concatenate([diff, f_latest]), spec.encoder),
            conv2d(np.concatenate([diff, f_prev]), spec.encoder),
        ]
    )
    return MotionField(conv2d(encoded, spec.flow), conv2d(encoded, spec.samp))


def warp_features(features, dp, xi=1.0, w_samp=None):
    """backward warp: out(y) = w(y) * F(y - xi * dp(y)), zero outside the grid"""
    features = as_tensor3(features, "features")
    dp = as_tensor3(dp, "displacement")
    if dp.shape != (2,) + features.shape[1:]:
        raise ShapeError("displacement %s does not fit features %s" % (dp.shape, features.shape))
    if not xi >= 0:
        raise ValidationError("temporal scale must be non-negative, got %r" % xi)
    _, h, w = features.shape
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                             indexing="ij")
    out = bilinear_sample(features, rows - xi * dp[1], cols - xi * dp[0])
    if w_samp is not None:
        w_samp = as_tensor3(w_samp, "sampling weight")
        if w_samp.shape != (1, h, w):
            raise ShapeError("sampling weight %s does not fit %dx%d" % (w_samp.shape, h, w))
        out = out * w_samp
    return out


def motion_difference(mf_stage1, mf_stage2):
    """effective stage-2 motion minus effective stage-1 motion"""
    if mf_stage1.shape != mf_stage2.shape:
        raise ShapeError("motion fields differ: %s vs %s" % (mf_stage1.shape, mf_stage2.shape))
    return mf_stage2.dp * mf_stage2.w_samp - mf_stage1.dp * mf_stage1.w_samp


def sinusoidal_embedding(position, dim, base=1.0e4):
    emb = np.zeros(dim)
    i = np.arange(0, dim, 2)
    angle = position / np.power(base, i / float(dim))
    emb[0::2] = np.sin(angle)
    emb[1::2] = np.cos(angle[: dim // 2])
    return emb


def predict_xi(mf_stage1, mf_stage2, ctx, weights=None, embed_base=1.0e4):
    if ctx.mode == "oracle":
        return ctx.oracle_xi
    delta = motion_difference(mf_stage1, mf_stage2)
    spec = weights if isinstance(weights, XiPredictorSpec) else (
        XiPredictorSpec.from_weights(weights, embed_base)
    )
    x = conv2d(delta, spec.stem)
    x = relu(conv2d(conv2d(x, spec.res1), spec.res2) + x)
    f_m = x.mean(axis=(1, 2))
    f_t = f_m + sinusoidal_embedding(ctx.periods, f_m.shape[0], spec.embed_base)
    return float(relu(mlp_forward(np.concatenate([f_m, f_t]), spec.mlp))[0])


@dataclass(frozen=True)
class PtamOptions:
    stage2_source: str = "latest"
    stage2_field: str = "scaled"
    embed_base: float = 1.0e4

    def __post_init__(self):
        if self.stage2_source not in STAGE2_SOURCES:
            raise ConfigError("ptam.stage2_source", "must be one of %s" % (STAGE2_SOURCES,))
        if self.stage2_field not in STAGE2_FIELDS:
            raise ConfigError("ptam.stage2_field", "must be one of %s" % (STAGE2_FIELDS,))

    @classmethod
    def from_config(cls, config):
        return cls(
            stage2_source=config["PTAM_STAGE2_SOURCE"],
            stage2_field=config["PTAM_STAGE2_FIELD"],
            embed_base=config["PTAM_EMBED_BASE"],
        )


def ptam_stage1(prev_scales, latest_scales, weights=None, motion=None):
    """
    Collaborator side: push F(t - tau) one sensor period forward (xi = 1).
    Returns (inter per scale, stage-1 fields per scale).
    """
    prev_scales = list(prev_scales)
    latest_scales = list(latest_scales)
    if len(prev_scales) != len(latest_scales):
        raise ShapeError("frame pair has %d and %d scales" % (len(prev_scales), len(latest_scales)))
    inter, fields = [], []
    for scale, (prev, latest) in enumerate(zip(prev_scales, latest_scales)):
        mf1 = motion[scale] if motion is not None else estimate_motion(latest, prev, weights, scale)
        inter.append(warp_features(latest, mf1.dp, 1.0, mf1.w_samp))
        fields.append(mf1)
    return inter, fields


def stage2_warp(latest, inter, mf1, mf2, xi, options):
    """the stage-2 transport selected by options, for features or any map on the same grid"""
    if options.stage2_field == "literal":
        return warp_features(inter, mf1.dp, 1.0, mf2.w_samp)
    source = latest if options.stage2_source == "latest" else inter
    return warp_features(source, mf2.dp, xi, mf2.w_samp)


def ptam_stage2(latest_scales, inter_scales, stage1, ctx, weights=None, options=None, motion=None):
    """
    Ego side: estimate the second field from (inter, latest), predict xi and
    warp. Returns (final per scale, stage-2 fields, xi per scale).
    """
    options = options or PtamOptions()
    final, fields, xis = [], [], []
    for scale, (latest, f_inter, mf1) in enumerate(zip(latest_scales, inter_scales, stage1)):
        if motion is not None:
            mf2 = motion[scale]
        else:
            mf2 = estimate_motion(f_inter, latest, weights, scale)
        xi = predict_xi(mf1, mf2, ctx, weights, options.embed_base)
        final.append(stage2_warp(latest, f_inter, mf1, mf2, xi, options))
        fields.append(mf2)
        xis.append(xi)
    logger.debug("ptam tau=%.3fs xi per scale %s", ctx.tau, ["%.3f" % x for x in xis])
    return final, fields, xis


def ptam_align(prev_scales, latest_scales, ctx, weights=None, options=None, motion=None):
    """
    Both stages on F(t - tau - dT) and F(t - tau) at every scale.

    `motion` optionally injects fields as {"stage1": [...], "stage2": [...]}
    (one MotionField per scale); otherwise they are estimated from the
    frames. Returns PtamResult(inter, final, stage1, stage2, xi).
    """
    latest_scales = list(latest_scales)
    inter, stage1 = ptam_stage1(
        prev_scales, latest_scales, weights, motion["stage1"] if motion else None
    )
    final, stage2, xis = ptam_stage2(
        latest_scales, inter, stage1, ctx, weights, options, motion["stage2"] if motion else None
    )
    return PtamResult(inter, final, stage1, stage2, xis)


def window_partition(h, w, l):
    """
    Anchors (row, col) of two tilings of l x l windows: W1 anchored at (0, 0),
    W2 offset by l // 2 along both axes.
    """
    if l < 1:
        raise ValidationError("window size must be positive, got %d" % l)
    if l > min(h, w):
        raise ValidationError("window %d does not fit a %dx%d grid" % (l, h, w))
    w1 = [(r * l, c * l) for r in range(h // l) for c in range(w // l)]
    off = l // 2
    w2 = [
        (off + r * l, off + c * l)
        for r in range((h - l) // l)
        for c in range((w - l) // l)
    ]
    return w1, w2


def clamp_window(l, h, w, scale=0):
    size = min(l, h, w)
    if size < l:
        logger.warning("scale %d grid %dx%d: window %d clamped to %d", scale, h, w, l, size)
    return size


def _windows(x, anchor, n_rows, n_cols, l):
    """(n_rows * n_cols, C, l, l) view of a regular tiling starting at anchor"""
    c = x.shape[0]
    r0, c0 = anchor
    block = x[:, r0 : r0 + n_rows * l, c0 : c0 + n_cols * l]
    return block.reshape(c, n_rows, l, n_cols, l).transpose(1, 3, 0, 2, 4).reshape(
        n_rows * n_cols, c, l, l
    )


def _unwindow(grads, anchor, n_rows, n_cols, l, shape):
    c = shape[0]
    out = np.zeros(shape)
    r0, c0 = anchor
    out[:, r0 : r0 + n_rows * l, c0 : c0 + n_cols * l] = (
        grads.reshape(n_rows, n_cols, c, l, l).transpose(2, 0, 3, 1, 4).reshape(
            c, n_rows * l, n_cols * l
        )
    )
    return out


def _tilings(h, w, l):
    off = l // 2
    tilings = [("W1", (0, 0), h // l, w // l)]
    if (h - l) // l > 0 and (w - l) // l > 0:
        tilings.append(("W2", (off, off), (h - l) // l, (w - l) // l))
    return tilings


def temporal_loss(pred_scales, gt_scales, l=16, counter=None):
    """
    Mean over W1 and W2 windows of (1 - cos)^2, where cos compares the
    flattened C*l*l prediction and target of a window; summed over scales.

    A window whose prediction or target has zero norm counts cos = 0 and is
    listed in the diagnostics. `counter`, when given, is charged with the
    similarity arithmetic per window cell (see app.sim.complexity).
    """
    if isinstance(pred_scales, np.ndarray) and pred_scales.ndim == 3:
        pred_scales, gt_scales = [pred_scales], [gt_scales]
    pred_scales, gt_scales = list(pred_scales), list(gt_scales)
    if len(pred_scales) != len(gt_scales):
        raise ShapeError("prediction has %d scales, target %d" % (len(pred_scales), len(gt_scales)))

    per_scale, grads, diagnostics = [], [], []
    for scale, (pred, gt) in enumerate(zip(pred_scales, gt_scales)):
        pred = as_tensor3(pred, "prediction")
        gt = as_tensor3(gt, "target")
        if pred.shape != gt.shape:
            raise ShapeError("scale %d: %s vs %s" % (scale, pred.shape, gt.shape))
        c, h, w = pred.shape
        size = clamp_window(l, h, w, scale)
        tilings = _tilings(h, w, size)
        n_windows = sum(nr * nc for _, _, nr, nc in tilings)

        loss = 0.0
        grad = np.zeros(pred.shape)
        for name, anchor, nr, nc in tilings:
            p = _windows(pred, anchor, nr, nc, size).reshape(nr * nc, -1)
            g = _windows(gt, anchor, nr, nc, size).reshape(nr * nc, -1)
            dot = np.einsum("ij,ij->i", p, g)
            pp = np.einsum("ij,ij->i", p, p)
            gg = np.einsum("ij,ij->i", g, g)
            p_norm, g_norm = np.sqrt(pp), np.sqrt(gg)
            degenerate = (p_norm == 0.0) | (g_norm == 0.0)
            denom = np.where(degenerate, 1.0, p_norm * g_norm)
            cos = np.where(degenerate, 0.0, dot / denom)
            err = 1.0 - cos
            loss += float(np.sum(err * err))

            safe_pp = np.where(degenerate, 1.0, pp)
            dcos = g / denom[:, None] - (cos / safe_pp)[:, None] * p
            dwin = np.where(degenerate[:, None], 0.0, (-2.0 * err)[:, None] * dcos)
            grad += _unwindow(dwin / n_windows, anchor, nr, nc, size, pred.shape)

            for k in np.flatnonzero(degenerate):
                r, cc = divmod(int(k), nc)
                diagnostics.append(
                    (scale, name, anchor[0] + r * size, anchor[1] + cc * size)
                )
            if counter is not None:
                cells = p.shape[0] * size * size
                counter.charge(
                    mul=3 * p.size + 2 * cells,
                    add=3 * (p.size - cells) + 2 * cells,
                    sqrt=2 * cells,
                    div=cells,
                )
        per_scale.append(loss / n_windows)
        grads.append(grad)
    if diagnostics:
        logger.debug("%d zero-norm windows", len(diagnostics))
    return TemporalLoss(per_scale, float(math.fsum(per_scale)), grads, diagnostics)


def window_cosines(pred_scales, gt_scales, l=16):
    """cosine of every W1 and W2 window at every scale, zero-norm windows as 0"""
    if isinstance(pred_scales, np.ndarray) and pred_scales.ndim == 3:
        pred_scales, gt_scales = [pred_scales], [gt_scales]
    out = []
    for scale, (pred, gt) in enumerate(zip(pred_scales, gt_scales)):
        pred = as_tensor3(pred, "prediction")
        gt = as_tensor3(gt, "target")
        if pred.shape != gt.shape:
            raise ShapeError("scale %d: %s vs %s" % (scale, pred.shape, gt.shape))
        _, h, w = pred.shape
        size = clamp_window(l, h, w, scale)
        for _, anchor, nr, nc in _tilings(h, w, size):
            p = _windows(pred, anchor, nr, nc, size).reshape(nr * nc, -1)
            g = _windows(gt, anchor, nr, nc, size).reshape(nr * nc, -1)
            denom = np.linalg.norm(p, axis=1) * np.linalg.norm(g, axis=1)
            safe = np.where(denom == 0.0, 1.0, denom)
            out.append(np.where(denom == 0.0, 0.0, np.einsum("ij,ij->i", p, g) / safe))
    return np.concatenate(out) if out else np.zeros(0)
