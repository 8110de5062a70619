# -*- coding: utf-8 -*-
"""
Per-agent LiDAR stand-in: box surface samples whose count falls off with the
square of the range, plus a flat ground patch, in the agent's own frame.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigError
from ..numerics import make_rng
from ..pointcloud import PointCloud
from .scenario import box_in_frame

OBJECT_INTENSITY = (0.5, 0.7)
GROUND_INTENSITY = 0.2
GROUND_NOISE = 0.02  # meters


@dataclass(frozen=True)
class RenderOptions:
    density: float = 20.0  # points per m^2 of box surface at the reference range
    reference_range: float = 10.0
    max_object_points: int = 4000
    ground_points: int = 3000

    def __post_init__(self):
        if self.density <= 0:
            raise ConfigError("render.density", "must be positive")
        if self.reference_range <= 0:
            raise ConfigError("render.reference_range", "must be positive")
        if self.max_object_points < 1:
            raise ConfigError("render.max_object_points", "must be at least 1")
        if self.ground_points < 0:
            raise ConfigError("render.ground_points", "must be non-negative")

    @classmethod
    def from_config(cls, config):
        return cls(
            density=config["RENDER_DENSITY"],
            reference_range=config["RENDER_REFERENCE_RANGE"],
            max_object_points=config["RENDER_MAX_OBJECT_POINTS"],
            ground_points=config["RENDER_GROUND_POINTS"],
        )


def surface_area(box):
    """top face plus the four sides"""
    return box.l * box.w + 2.0 * (box.l + box.w) * box.h


def point_count(box, distance, options):
    """1/d^2 falloff with a floor of one point"""
    d = max(distance, 1e-3)
    n = options.density * surface_area(box) * (options.reference_range / d) ** 2
    return int(min(max(1, round(n)), options.max_object_points))


def _surface_samples(rng, box, n):
    """
    n samples in box-local coordinates (origin at the box center). The draw
    order never depends on n, so a shorter prefix is a subset of a longer one.
    """
    l, w, h = box.l, box.w, box.h
    areas = np.array([l * w, w * h, w * h, l * h, l * h])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.random(n) - 0.5
    v = rng.random(n) - 0.5
    intensity = rng.uniform(*OBJECT_INTENSITY, size=n)
    local = np.empty((n, 3))
    top = face == 0
    local[top] = np.stack([u[top] * l, v[top] * w, np.full(top.sum(), h / 2)], axis=1)
    for k, sign in ((1, 1.0), (2, -1.0)):
        m = face == k
        local[m] = np.stack([np.full(m.sum(), sign * l / 2), u[m] * w, v[m] * h], axis=1)
    for k, sign in ((3, 1.0), (4, -1.0)):
        m = face == k
        local[m] = np.stack([u[m] * l, np.full(m.sum(), sign * w / 2), v[m] * h], axis=1)
    return local, intensity


def render_pointcloud(scenario, agent_id, t, spec, options=None):
    """
    Points (x, y, z, intensity) in the agent's frame at time t. Samples are
    seeded per (scenario seed, agent, object), so consecutive frames reuse
    the same surface points on each object.
    """
    options = options or RenderOptions()
    scenario.check_time(t)
    agent = scenario.agent(agent_id)
    agent_index = scenario.agents.index(agent)
    pose = scenario.agent_pose(agent_id, t)

    parts = []
    for index, world_box in enumerate(scenario.boxes_at(t)):
        box = box_in_frame(world_box, pose)
        n = point_count(box, math.hypot(box.x, box.y), options)
        rng = make_rng(scenario.seed, agent_index + 1, index + 1)
        local, intensity = _surface_samples(rng, box, options.max_object_points)
        local, intensity = local[:n], intensity[:n]
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        x = box.x + c * local[:, 0] - s * local[:, 1]
        y = box.y + s * local[:, 0] + c * local[:, 1]
        z = box.z + local[:, 2]
        parts.append(np.stack([x, y, z, intensity], axis=1))

    if options.ground_points:
        rng = make_rng(scenario.seed, agent_index + 1, 0)
        n = options.ground_points
        x = rng.uniform(spec.x_range[0], spec.x_range[1], size=n)
        y = rng.uniform(spec.y_range[0], spec.y_range[1], size=n)
        z = rng.normal(0.0, GROUND_NOISE, size=n)
        parts.append(np.stack([x, y, z, np.full(n, GROUND_INTENSITY)], axis=1))

    if not parts:
        return PointCloud.empty()
    return PointCloud(np.concatenate(parts, axis=0))
