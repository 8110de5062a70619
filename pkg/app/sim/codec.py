# -*- coding: utf-8 -*-
"""
Lossy feature transmission: every tensor of a packet is quantized and
dequantized per tensor, and the reconstruction error is reported.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..exceptions import ConfigError
from ..temporal import DelayContext, MotionField

logger = logging.getLogger(__name__)

CODEC_MODES = ("identity", "fp16", "int8")
INT8_LEVELS = 127

# payload bytes per value; int8 also ships one float32 scale per tensor
_VALUE_BYTES = {"identity": 8, "fp16": 2, "int8": 1}


@dataclass(frozen=True)
class CodecConfig:
    mode: str = "identity"
    scale_policy: str = "max_abs"

    def __post_init__(self):
        if self.mode not in CODEC_MODES:
            raise ConfigError("codec.mode", "must be one of %s" % (CODEC_MODES,))
        if self.scale_policy != "max_abs":
            raise ConfigError("codec.scale_policy", "only max_abs is supported")

    @classmethod
    def from_config(cls, config):
        return cls(mode=config["CODEC_MODE"])


@dataclass(frozen=True)
class Packet:
    """what a collaborator sends: features per scale, stage-1 fields, extra maps"""

    features: List[np.ndarray]
    motion: List[MotionField] = field(default_factory=list)
    extras: Dict[str, np.ndarray] = field(default_factory=dict)
    inter: List[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class Reception:
    packet: Packet
    context: DelayContext
    mse: Dict[str, float]
    wire_bytes: int
    raw_bytes: int

    @property
    def mean_mse(self):
        if not self.mse:
            return 0.0
        return float(np.mean(list(self.mse.values())))

    @property
    def compression_ratio(self):
        return self.raw_bytes / float(self.wire_bytes) if self.wire_bytes else 1.0


def quantize(x, mode):
    """(reconstruction, bytes on the wire)"""
    x = np.asarray(x, dtype=np.float64)
    if mode == "identity":
        return x.copy(), x.size * _VALUE_BYTES[mode]
    if mode == "fp16":
        top = float(np.finfo(np.float16).max)
        # saturate instead of overflowing to inf
        half = np.clip(x, -top, top).astype(np.float16)
        return half.astype(np.float64), x.size * _VALUE_BYTES[mode]
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    scale = peak / INT8_LEVELS if peak > 0 else 1.0
    q = np.clip(np.round(x / scale), -INT8_LEVELS, INT8_LEVELS).astype(np.int8)
    return q.astype(np.float64) * scale, x.size * _VALUE_BYTES[mode] + 4


def _tensors(packet):
    tensors = OrderedDict()
    for k, f in enumerate(packet.features):
        tensors["feature.s%d" % k] = f
    for k, f in enumerate(packet.inter):
        tensors["inter.s%d" % k] = f
    for k, mf in enumerate(packet.motion):
        tensors["motion.s%d.dp" % k] = mf.dp
        tensors["motion.s%d.w" % k] = mf.w_samp
    for name in sorted(packet.extras):
        tensors["extra." + name] = packet.extras[name]
    return tensors


def transmit(packet, tau, codec=None, dt=0.1, xi_mode="oracle"):
    """send packet over a link with delay tau (seconds)"""
    codec = codec or CodecConfig()
    received, mse = OrderedDict(), OrderedDict()
    wire = raw = 0
    for name, value in _tensors(packet).items():
        out, nbytes = quantize(value, codec.mode)
        received[name] = out
        mse[name] = float(np.mean((out - value) ** 2)) if value.size else 0.0
        wire += nbytes
        raw += value.size * _VALUE_BYTES["identity"]
    logger.debug("codec %s: %d -> %d bytes, mse %s", codec.mode, raw, wire, dict(mse))

    motion = [
        MotionField(received["motion.s%d.dp" % k], np.clip(received["motion.s%d.w" % k], 0.0, 1.0))
        for k in range(len(packet.motion))
    ]
    out = Packet(
        features=[received["feature.s%d" % k] for k in range(len(packet.features))],
        motion=motion,
        extras={name: received["extra." + name] for name in packet.extras},
        inter=[received["inter.s%d" % k] for k in range(len(packet.inter))],
    )
    return Reception(out, DelayContext(tau, dt, xi_mode), dict(mse), wire, raw)
