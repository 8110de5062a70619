# -*- coding: utf-8 -*-
"""
Point clouds, oriented boxes and proximal-region hierarchical downsampling.

Near-range objects are over-sampled by LiDAR compared with distant ones; the
downsampling thins the points of up to N_max close objects, keeping more of
each object's outer shell (contour) than of its core.
"""

import csv
import logging
import math
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError, ValidationError
from .numerics import make_rng

logger = logging.getLogger(__name__)

_count = struct.Struct("<I")
_TOL = 1e-9


def normalize_yaw(yaw):
    """map to (-pi, pi]"""
    return yaw - 2.0 * math.pi * math.ceil((yaw - math.pi) / (2.0 * math.pi))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 4): x, y, z in meters, intensity in [0, 1]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ShapeError("point cloud must be (N, 4), got %s" % (pts.shape,))
        if not np.isfinite(pts).all():
            raise ValidationError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self):
        return self.points[:, :3]

    def subset(self, index):
        return PointCloud(self.points[index])

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 4)))

    @classmethod
    def concat(cls, clouds):
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(np.concatenate([c.points for c in clouds], axis=0))


@dataclass(frozen=True)
class OrientedBox:
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        if min(self.l, self.w, self.h) <= 0:
            raise ValidationError(
                "box dims must be positive, got %s" % ((self.l, self.w, self.h),)
            )
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def center(self):
        return np.array([self.x, self.y, self.z])

    def scaled(self, factor):
        """concentric box, same yaw"""
        return OrientedBox(
            self.x, self.y, self.z, self.l * factor, self.w * factor, self.h * factor, self.yaw
        )

    def local_coords(self, xyz):
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        d = xyz - self.center
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        lx = c * d[:, 0] + s * d[:, 1]
        ly = -s * d[:, 0] + c * d[:, 1]
        return np.stack([lx, ly, d[:, 2]], axis=1)

    def contains(self, xyz):
        """closed-box membership"""
        local = np.abs(self.local_coords(xyz))
        half = np.array([self.l, self.w, self.h]) / 2.0 + _TOL
        return np.all(local <= half, axis=1)

    def footprint_contains(self, xy, margin=0.0):
        """closed BEV footprint membership, optionally grown by margin meters"""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        d = xy - np.array([self.x, self.y])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        lx = np.abs(c * d[:, 0] + s * d[:, 1])
        ly = np.abs(-s * d[:, 0] + c * d[:, 1])
        return (lx <= self.l / 2.0 + margin + _TOL) & (ly <= self.w / 2.0 + margin + _TOL)

    def corners_2d(self):
        """footprint corners, counter-clockwise"""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        half = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
        return np.array(
            [
                (
                    self.x + c * sx * self.l / 2 - s * sy * self.w / 2,
                    self.y + s * sx * self.l / 2 + c * sy * self.w / 2,
                )
                for sx, sy in half
            ]
        )

    def to_json(self):
        return {
            "x": self.x,
            "y": self.y,
            "z": self.z,
            "l": self.l,
            "w": self.w,
            "h": self.h,
            "yaw": self.yaw,
        }

    @staticmethod
    def from_json(json_box):
        try:
            fields = {k: float(json_box[k]) for k in ("x", "y", "z", "l", "w", "h")}
            return OrientedBox(yaw=float(json_box.get("yaw", 0.0)), **fields)
        except (KeyError, TypeError) as e:
            raise ValidationError("box is missing field %s" % e)


@dataclass(frozen=True)
class PhdConfig:
    d_th: float = 50.0
    n_max: int = 2
    alpha: float = 0.5
    beta_in: float = 0.6
    beta_out: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("phd.alpha", "must be in (0, 1)")
        if not 0.0 < self.beta_in <= 1.0:
            raise ConfigError("phd.beta_in", "must be in (0, 1]")
        if not 0.0 < self.beta_out <= 1.0:
            raise ConfigError("phd.beta_out", "must be in (0, 1]")
        if self.n_max < 0:
            raise ConfigError("phd.n_max", "must be non-negative")
        if self.d_th < 0:
            raise ConfigError("phd.d_th", "must be non-negative")

    @classmethod
    def from_config(cls, config, seed=None):
        return cls(
            d_th=config["PHD_D_TH"],
            n_max=config["PHD_N_MAX"],
            alpha=config["PHD_ALPHA"],
            beta_in=config["PHD_BETA_IN"],
            beta_out=config["PHD_BETA_OUT"],
            seed=config["SCENARIO_SEED"] if seed is None else seed,
        )


def select_proximal(boxes, ego_xy, cfg, rng=None):
    """indices of boxes within d_th on the ground plane, at most n_max of them"""
    if not boxes:
        return []
    centers = np.array([[b.x, b.y] for b in boxes])
    dist = np.hypot(*(centers - np.asarray(ego_xy, dtype=np.float64)[:2]).T)
    qualified = np.flatnonzero(dist <= cfg.d_th)
    if len(qualified) <= cfg.n_max:
        return [int(i) for i in qualified]
    if rng is None:
        rng = make_rng(cfg.seed)
    chosen = rng.choice(qualified, size=cfg.n_max, replace=False)
    return sorted(int(i) for i in chosen)


def region_indices(cloud, box, alpha, exclude=None):
    inside = box.contains(cloud.xyz)
    inner = box.scaled(alpha).contains(cloud.xyz)
    if exclude is not None:
        inside &= ~exclude
        inner &= ~exclude
    return np.flatnonzero(inner), np.flatnonzero(inside & ~inner)


def partition_regions(cloud, box, alpha):
    """(inner, outer) points; points outside the full box are in neither"""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("phd.alpha", "must be in (0, 1)")
    inner, outer = region_indices(cloud, box, alpha)
    return cloud.subset(inner), cloud.subset(outer)


def sample_count(n, beta):
    # guard against 0.6 * 100 landing a hair above 60
    return int(math.ceil(beta * n - 1e-9)) if n else 0


def fps_indices(points, beta):
    """
    Greedy farthest point sampling of ceil(beta * n) points.

    Seed is the point farthest from the centroid; every next pick maximises the
    distance to the chosen set. Ties go to the lowest index. Returned sorted.
    """
    if not 0.0 < beta <= 1.0:
        raise ValidationError("fps ratio must be in (0, 1], got %r" % beta)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    k = sample_count(n, beta)
    if k >= n:
        return np.arange(n)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = np.argmax(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1))
    min_dist = np.sum((pts - pts[chosen[0]]) ** 2, axis=1)
    min_dist[chosen[0]] = -np.inf
    for i in range(1, k):
        nxt = int(np.argmax(min_dist))
        chosen[i] = nxt
        min_dist = np.minimum(min_dist, np.sum((pts - pts[nxt]) ** 2, axis=1))
        min_dist[nxt] = -np.inf
    return np.sort(chosen)


def fps(points, beta):
    pts = np.asarray(points, dtype=np.float64)
    return pts[fps_indices(pts, beta)]


def phd_apply(cloud, boxes, ego_xy, cfg, rng=None):
    """downsample inner/outer regions of the selected proximal boxes"""
    selected = select_proximal(boxes, ego_xy, cfg, rng)
    keep = np.ones(len(cloud), dtype=bool)
    claimed = np.zeros(len(cloud), dtype=bool)
    for index in selected:
        inner, outer = region_indices(cloud, boxes[index], cfg.alpha, exclude=claimed)
        for region, beta in ((inner, cfg.beta_in), (outer, cfg.beta_out)):
            if len(region) == 0:
                continue
            kept = region[fps_indices(cloud.xyz[region], beta)]
            keep[region] = False
            keep[kept] = True
        claimed[inner] = True
        claimed[outer] = True
        logger.debug(
            "phd box %d: inner %d -> %d, outer %d -> %d",
            index,
            len(inner),
            sample_count(len(inner), cfg.beta_in),
            len(outer),
            sample_count(len(outer), cfg.beta_out),
        )
    return cloud.subset(keep)


def write_binary(stream, cloud):
    stream.write(_count.pack(len(cloud)))
    stream.write(cloud.points.astype("<f4").tobytes())


def read_binary(stream):
    header = stream.read(_count.size)
    if len(header) != _count.size:
        raise ValidationError("point cloud stream has no count header")
    (count,) = _count.unpack(header)
    payload = stream.read(count * 16)
    if len(payload) != count * 16:
        raise ValidationError(
            "point cloud declares %d points, payload holds %d bytes" % (count, len(payload))
        )
    return PointCloud(np.frombuffer(payload, dtype="<f4").reshape(count, 4))


def write_csv(stream, cloud):
    writer = csv.writer(stream)
    writer.writerow(["x", "y", "z", "intensity"])
    for row in cloud.points:
        writer.writerow(["%.6f" % v for v in row])


def read_csv(stream):
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != ["x", "y", "z", "intensity"]:
        raise ValidationError("unexpected point cloud csv header %r" % header)
    rows = [[float(v) for v in row] for row in reader if row]
    return PointCloud(np.array(rows).reshape(-1, 4))
