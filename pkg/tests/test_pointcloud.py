# -*- coding: utf-8 -*-

import io
import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from app.exceptions import ConfigError, ShapeError, ValidationError
from app.numerics import make_rng
from app.pointcloud import (
    OrientedBox,
    PhdConfig,
    PointCloud,
    fps,
    fps_indices,
    normalize_yaw,
    partition_regions,
    phd_apply,
    read_binary,
    read_csv,
    region_indices,
    sample_count,
    select_proximal,
    write_binary,
    write_csv,
)


def fps_oracle(points, beta):
    """greedy FPS, one candidate at a time"""
    n = len(points)
    k = int(math.ceil(beta * n - 1e-9))
    if k >= n:
        return list(range(n))
    centroid = points.mean(axis=0)
    first = max(range(n), key=lambda i: (np.sum((points[i] - centroid) ** 2), -i))
    chosen = [first]
    while len(chosen) < k:
        best, best_d = None, -1.0
        for i in range(n):
            if i in chosen:
                continue
            d = np.min(np.sum((points[chosen] - points[i]) ** 2, axis=1))
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return sorted(chosen)


def cloud_in_box(rng, box, n):
    local = (rng.random((n, 3)) - 0.5) * np.array([box.l, box.w, box.h]) * 0.98
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    xyz = np.stack(
        [box.x + c * local[:, 0] - s * local[:, 1], box.y + s * local[:, 0] + c * local[:, 1],
         box.z + local[:, 2]],
        axis=1,
    )
    return np.hstack([xyz, rng.random((n, 1))])


class FpsTestCase(unittest.TestCase):
    def test_matches_brute_force_oracle(self):
        rng = make_rng(2024)
        for trial in range(100):
            n = int(rng.integers(1, 65))
            dim = 2 if trial % 2 else 3
            beta = (0.25, 0.5, 0.75)[trial % 3]
            points = rng.standard_normal((n, dim))
            self.assertEqual(list(fps_indices(points, beta)), fps_oracle(points, beta), trial)

    def test_counts(self):
        self.assertEqual(sample_count(100, 0.6), 60)
        self.assertEqual(sample_count(7, 0.5), 4)
        self.assertEqual(sample_count(0, 0.5), 0)
        self.assertEqual(len(fps_indices(np.zeros((10, 2)), 1.0)), 10)
        with self.assertRaises(ValidationError):
            fps_indices(np.zeros((3, 2)), 0.0)

    def test_returns_selected_points(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [5.0, 1.0]])
        assert_array_equal(fps(points, 0.5), points[[0, 2]])


class BoxTestCase(unittest.TestCase):
    def test_yaw_range(self):
        self.assertAlmostEqual(normalize_yaw(2.5 * math.pi), 0.5 * math.pi)
        self.assertAlmostEqual(normalize_yaw(-math.pi), math.pi)
        self.assertAlmostEqual(normalize_yaw(0.5), 0.5)

    def test_contains_rotated(self):
        box = OrientedBox(1.0, 2.0, 0.5, 4.0, 2.0, 1.0, math.pi / 2)
        inside = box.contains([[1.0, 3.9, 0.5], [1.9, 2.0, 0.5]])
        outside = box.contains([[2.5, 2.0, 0.5], [1.0, 2.0, 1.2]])
        self.assertTrue(inside.all())
        self.assertFalse(outside.any())

    def test_corners_counter_clockwise(self):
        corners = OrientedBox(0, 0, 0, 4, 2, 1, 0.3).corners_2d()
        x, y = corners.T
        area = 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        self.assertAlmostEqual(area, 8.0)

    def test_invalid_dims(self):
        with self.assertRaises(ValidationError):
            OrientedBox(0, 0, 0, 0.0, 1, 1)
        with self.assertRaises(ValidationError):
            OrientedBox.from_json({"x": 0, "y": 0})


class PhdTestCase(unittest.TestCase):
    def setUp(self):
        rng = make_rng(9)
        self.near = OrientedBox(5.0, 0.0, 0.8, 4.0, 2.0, 1.6, 0.4)
        self.far = OrientedBox(80.0, 0.0, 0.8, 4.0, 2.0, 1.6, 0.0)
        self.loose = np.hstack([rng.uniform(20, 30, (50, 3)), rng.random((50, 1))])
        self.cloud = PointCloud(
            np.vstack([
                cloud_in_box(rng, self.near, 200),
                cloud_in_box(rng, self.far, 40),
                self.loose,
            ])
        )
        self.cfg = PhdConfig()

    def test_defaults(self):
        self.assertEqual((self.cfg.beta_in, self.cfg.beta_out, self.cfg.alpha), (0.6, 0.8, 0.5))
        with self.assertRaises(ConfigError) as ctx:
            PhdConfig(beta_in=1.5)
        self.assertEqual(ctx.exception.path, "phd.beta_in")

    def test_region_counts(self):
        boxes = [self.near, self.far]
        inner, outer = region_indices(self.cloud, self.near, 0.5)
        out = phd_apply(self.cloud, boxes, (0.0, 0.0), self.cfg)
        kept_inner, kept_outer = partition_regions(out, self.near, 0.5)
        self.assertEqual(len(kept_inner), sample_count(len(inner), 0.6))
        self.assertEqual(len(kept_outer), sample_count(len(outer), 0.8))

    def test_subset_and_untouched(self):
        out = phd_apply(self.cloud, [self.near, self.far], (0.0, 0.0), self.cfg)
        rows = {tuple(p) for p in self.cloud.points}
        self.assertTrue(all(tuple(p) in rows for p in out.points))
        # the far box lies beyond d_th and loose points belong to no box
        self.assertEqual(int(self.far.contains(out.xyz).sum()), 40)
        kept = {tuple(p) for p in out.points}
        self.assertTrue(all(tuple(p) in kept for p in self.loose))

    def test_deterministic(self):
        a = phd_apply(self.cloud, [self.near, self.far], (0.0, 0.0), self.cfg)
        b = phd_apply(self.cloud, [self.near, self.far], (0.0, 0.0), self.cfg)
        assert_array_equal(a.points, b.points)

    def test_selection_capped(self):
        boxes = [OrientedBox(float(i), 0.0, 0.0, 1, 1, 1) for i in range(5)]
        a = select_proximal(boxes, (0, 0), self.cfg, make_rng(1))
        b = select_proximal(boxes, (0, 0), self.cfg, make_rng(1))
        self.assertEqual(len(a), 2)
        self.assertEqual(a, b)
        self.assertEqual(select_proximal(boxes[:2], (0, 0), self.cfg), [0, 1])
        self.assertEqual(select_proximal([], (0, 0), self.cfg), [])

    def test_inner_region_keeps_the_smaller_fraction(self):
        for seed in range(5):
            rng = make_rng(seed, 7)
            cloud = PointCloud(cloud_in_box(rng, self.near, 800))
            inner, outer = region_indices(cloud, self.near, 0.5)
            for beta_in, beta_out in ((0.3, 0.6), (0.6, 0.8), (0.5, 1.0)):
                cfg = PhdConfig(beta_in=beta_in, beta_out=beta_out)
                kept_inner, kept_outer = partition_regions(
                    phd_apply(cloud, [self.near], (0.0, 0.0), cfg), self.near, 0.5
                )
                self.assertLessEqual(
                    len(kept_inner) / len(inner), len(kept_outer) / len(outer), (seed, beta_in)
                )


class CloudIoTestCase(unittest.TestCase):
    def test_binary_and_csv(self):
        cloud = PointCloud(make_rng(4).random((6, 4)))
        buf = io.BytesIO()
        write_binary(buf, cloud)
        buf.seek(0)
        assert_allclose(read_binary(buf).points, cloud.points, rtol=1e-6)
        text = io.StringIO()
        write_csv(text, cloud)
        text.seek(0)
        assert_allclose(read_csv(text).points, cloud.points, atol=1e-6)

    def test_bad_input(self):
        with self.assertRaises(ShapeError):
            PointCloud(np.zeros((3, 3)))
        with self.assertRaises(ValidationError):
            read_binary(io.BytesIO(b"\x05\x00\x00\x00" + b"\0" * 8))
