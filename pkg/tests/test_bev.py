# -*- coding: utf-8 -*-

import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from app.bev import (
    BevSpec,
    MultiScaleFeatures,
    backbone_forward,
    bev_project,
    evidence_map,
    init_backbone_weights,
    init_bevproj_weights,
    pillar_encode,
    rasterize_boxes,
)
from app.exceptions import ConfigError, ShapeError
from app.numerics import make_rng
from app.pointcloud import OrientedBox, PointCloud


class BevSpecTestCase(unittest.TestCase):
    def test_grid_must_tile(self):
        with self.assertRaises(ConfigError):
            BevSpec(0.3, (-12.8, 12.8), (-12.8, 12.8))
        with self.assertRaises(ConfigError) as ctx:
            BevSpec(1.0, (0.0, 6.0), (0.0, 8.0))
        self.assertEqual(ctx.exception.path, "bev.x_range")
        spec = BevSpec(0.5, (-5, 5), (-2, 2))
        self.assertEqual((spec.height, spec.width), (8, 20))

    def test_centers_land_on_integer_indices(self):
        spec = BevSpec(0.4, (-12.8, 12.8), (-6.4, 6.4))
        xs, ys = spec.cell_centers(1)
        self.assertEqual(xs.shape, (16, 32))
        rows, cols = spec.continuous_index(xs, ys, 1)
        assert_allclose(rows, np.arange(16)[:, None] * np.ones((1, 32)), atol=1e-9)
        assert_allclose(cols, np.ones((16, 1)) * np.arange(32)[None], atol=1e-9)


class PillarTestCase(unittest.TestCase):
    def setUp(self):
        self.spec = BevSpec(1.0, (0.0, 4.0), (0.0, 4.0))
        self.cloud = PointCloud(
            [
                [0.5, 0.5, 1.0, 0.2],
                [0.2, 0.7, 0.2, 0.4],
                [3.5, 1.5, 0.1, 1.0],
                [5.0, 5.0, 1.0, 1.0],  # off the grid
            ]
        )

    def test_statistics(self):
        pillars = pillar_encode(self.cloud, self.spec)
        self.assertEqual(pillars.shape, (8, 4, 4))
        offset = 0.5 * math.hypot(0.3, 0.2)
        assert_allclose(
            pillars[:, 0, 0], [1, math.log(3), 0.6, 1.0, 0.2, 0.8, 0.3, offset], atol=1e-12
        )
        assert_allclose(pillars[:, 1, 3], [1, math.log(2), 0.1, 0.1, 0.1, 0.0, 1.0, 0.0], atol=1e-12)
        self.assertEqual(int(pillars[0].sum()), 2)

    def test_whole_cell_shift_moves_the_encoding(self):
        spec = BevSpec(1.0, (0.0, 8.0), (0.0, 8.0))
        rng = make_rng(12)
        # coordinates on a 1/64 lattice keep the shifted cell arithmetic exact
        xy = rng.integers(0, 7 * 32, (200, 2)) / 32.0 + 1.0 / 64
        points = np.hstack([xy, rng.uniform(0, 2, (200, 1)), rng.random((200, 1))])
        shifted = points.copy()
        shifted[:, :2] += 1.0
        base = pillar_encode(PointCloud(points), spec)
        moved = pillar_encode(PointCloud(shifted), spec)
        assert_array_equal(moved[:, 1:, 1:], base[:, :-1, :-1])
        assert_array_equal(moved[:, 0, :], 0.0)
        assert_array_equal(moved[:, :, 0], 0.0)
        self.assertTrue(base[0].any())

    def test_empty_cloud(self):
        assert_array_equal(pillar_encode(PointCloud.empty(), self.spec), 0.0)

    def test_evidence(self):
        pillars = pillar_encode(self.cloud, self.spec)
        ev = evidence_map(pillars, 0.3)
        self.assertEqual(ev.shape, (1, 4, 4))
        self.assertEqual(ev[0, 0, 0], 1.0)
        self.assertEqual(ev[0, 1, 3], 0.0)
        self.assertEqual(ev.sum(), 1.0)

    def test_rasterize(self):
        box = OrientedBox(2.0, 2.0, 0.5, 2.0, 2.0, 1.0)
        grid = rasterize_boxes([box], self.spec)
        expected = np.zeros((4, 4))
        expected[1:3, 1:3] = 1.0
        assert_array_equal(grid[0], expected)
        # a one-meter margin reaches every center
        self.assertEqual(rasterize_boxes([box], self.spec, margin=1.0).sum(), 16)


class BackboneTestCase(unittest.TestCase):
    def setUp(self):
        self.spec = BevSpec(0.8, (-6.4, 6.4), (-6.4, 6.4))
        rng = make_rng(3)
        cloud = PointCloud(
            np.hstack([rng.uniform(-6, 6, (300, 2)), rng.uniform(0, 2, (300, 1)), rng.random((300, 1))])
        )
        self.pillars = pillar_encode(cloud, self.spec)

    def test_scales(self):
        ms = backbone_forward(self.pillars, seed=5)
        self.assertEqual([s.shape for s in ms.scales], [(64, 16, 16), (128, 8, 8), (256, 4, 4)])
        self.assertTrue(all((s >= 0).all() for s in ms.scales))
        explicit = backbone_forward(self.pillars, init_backbone_weights(make_rng(5, 1)))
        assert_array_equal(ms.small, explicit.small)

    def test_projection_is_linear(self):
        weights = init_bevproj_weights(make_rng(0, 2))
        rng = make_rng(8)
        shapes = [(64, 16, 16), (128, 8, 8), (256, 4, 4)]
        a = MultiScaleFeatures.from_scales([rng.standard_normal(s) for s in shapes])
        b = MultiScaleFeatures.from_scales([rng.standard_normal(s) for s in shapes])
        both = MultiScaleFeatures.from_scales([x + y for x, y in zip(a.scales, b.scales)])
        out = bev_project(both, weights)
        self.assertEqual(out.shape, (384, 16, 16))
        assert_allclose(out, bev_project(a, weights) + bev_project(b, weights), atol=1e-9)

    def test_each_output_block_follows_one_scale(self):
        weights = init_bevproj_weights(make_rng(0, 2))
        rng = make_rng(9)
        shapes = [(64, 16, 16), (128, 8, 8), (256, 4, 4)]
        scales = [rng.standard_normal(s) for s in shapes]
        base = bev_project(MultiScaleFeatures.from_scales(scales), weights)
        for level, shape in enumerate(shapes):
            perturbed = list(scales)
            perturbed[level] = scales[level] + rng.standard_normal(shape)
            out = bev_project(MultiScaleFeatures.from_scales(perturbed), weights)
            for block in range(3):
                rows = slice(128 * block, 128 * (block + 1))
                unchanged = np.array_equal(out[rows], base[rows])
                self.assertEqual(unchanged, block != level, (level, block))

    def test_scale_shapes_checked(self):
        with self.assertRaises(ShapeError):
            MultiScaleFeatures(np.zeros((64, 16, 16)), np.zeros((128, 8, 8)), np.zeros((256, 8, 8)))
        with self.assertRaises(ShapeError):
            MultiScaleFeatures(np.zeros((32, 16, 16)), np.zeros((128, 8, 8)), np.zeros((256, 4, 4)))
        with self.assertRaises(ShapeError):
            backbone_forward(np.zeros((8, 6, 6)))
