# -*- coding: utf-8 -*-
"""
Named-weight archive.

Layout (little endian): magic b"CPAW", version u16, entry count u32, then per
entry: name length u16, UTF-8 name, rank u8, one u32 per dim, float32 payload.
"""

import io
import logging
import struct

import numpy as np

from .exceptions import WeightsError

MAGIC = b"CPAW"
VERSION = 1

_header = struct.Struct("<4sHI")
_u16 = struct.Struct("<H")
_u8 = struct.Struct("<B")

logger = logging.getLogger(__name__)


def dumps(tensors):
    buf = io.BytesIO()
    buf.write(_header.pack(MAGIC, VERSION, len(tensors)))
    for name, value in tensors.items():
        value = np.asarray(value, dtype="<f4")
        raw_name = name.encode("utf-8")
        buf.write(_u16.pack(len(raw_name)))
        buf.write(raw_name)
        buf.write(_u8.pack(value.ndim))
        buf.write(struct.pack("<%dI" % value.ndim, *value.shape))
        buf.write(np.ascontiguousarray(value).tobytes())
    return buf.getvalue()


def loads(data):
    view = memoryview(data)
    if len(view) < _header.size:
        raise WeightsError("archive too short for its header")
    magic, version, count = _header.unpack_from(view, 0)
    if magic != MAGIC:
        raise WeightsError("unknown magic %r" % bytes(magic))
    if version != VERSION:
        raise WeightsError("unsupported archive version %d" % version)
    offset = _header.size
    tensors = {}
    name = None
    for index in range(count):
        name = "#%d" % index
        try:
            (name_len,) = _u16.unpack_from(view, offset)
            offset += _u16.size
            if offset + name_len > len(view):
                raise struct.error("name runs past the end")
            name = bytes(view[offset : offset + name_len]).decode("utf-8")
            offset += name_len
            (rank,) = _u8.unpack_from(view, offset)
            offset += _u8.size
            dims = struct.unpack_from("<%dI" % rank, view, offset)
            offset += 4 * rank
        except (struct.error, UnicodeDecodeError) as e:
            raise WeightsError("truncated header for tensor %r: %s" % (name, e))
        size = int(np.prod(dims, dtype=np.int64)) * 4
        if offset + size > len(view):
            raise WeightsError(
                "tensor %r declares %d bytes, only %d remain"
                % (name, size, len(view) - offset)
            )
        tensors[name] = (
            np.frombuffer(view[offset : offset + size], dtype="<f4")
            .reshape(dims)
            .astype(np.float32)
        )
        offset += size
    if offset != len(view):
        raise WeightsError(
            "%d trailing bytes at offset %d after last tensor %r" % (len(view) - offset, offset, name)
        )
    return tensors


def save(path, tensors):
    with open(path, "wb") as f:
        f.write(dumps(tensors))
    logger.info("saved %d tensors to %s", len(tensors), path)


def load(path):
    with open(path, "rb") as f:
        tensors = loads(f.read())
    logger.info("loaded %d tensors from %s", len(tensors), path)
    return tensors


def require(weights, names, shapes=None):
    """fetch tensors by name; raise listing every absentee at once"""
    missing = [n for n in names if n not in weights]
    if missing:
        raise WeightsError("missing weights: %s" % ", ".join(missing))
    out = [np.asarray(weights[n], dtype=np.float64) for n in names]
    if shapes is not None:
        for name, value, shape in zip(names, out, shapes):
            if shape is not None and tuple(value.shape) != tuple(shape):
                raise WeightsError(
                    "weight %r has shape %s, expected %s"
                    % (name, tuple(value.shape), tuple(shape))
                )
    return out


def default_weights(seed, spec_channels=8):
    """every named tensor the pipeline reads, from one seed"""
    from .bev import init_backbone_weights, init_bevproj_weights
    from .domain import init_discriminator_weights, init_foreground_weights
    from .fusion import init_ifam_weights
    from .numerics import make_rng
    from .temporal import init_motion_weights, init_xi_weights

    weights = {}
    weights.update(init_backbone_weights(make_rng(seed, 1), spec_channels))
    weights.update(init_bevproj_weights(make_rng(seed, 2)))
    weights.update(init_foreground_weights(make_rng(seed, 3), 384))
    weights.update(init_discriminator_weights(make_rng(seed, 4), 384))
    weights.update(init_motion_weights(make_rng(seed, 5), (64, 128, 256)))
    weights.update(init_xi_weights(make_rng(seed, 6)))
    weights.update(init_ifam_weights(make_rng(seed, 7), 384))
    return weights
