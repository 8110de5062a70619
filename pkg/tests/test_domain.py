# -*- coding: utf-8 -*-

import io
import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from app.bev import BevSpec
from app.domain import (
    GRL_GAMMA,
    DiscriminatorSpec,
    ObservabilityMap,
    Pose2,
    complete_voids,
    discriminator_forward,
    domain_loss_and_grads,
    foreground_estimate,
    init_discriminator_weights,
    init_foreground_weights,
    observability_weighting,
    transform_to_ego,
    write_pgm,
)
from app.exceptions import DegenerateWeightingError, ShapeError, ValidationError
from app.numerics import make_rng


def central_difference(f, x, h=1e-6):
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


class PoseTestCase(unittest.TestCase):
    def test_inverse(self):
        pose = Pose2(3.0, -1.0, 0.7)
        ident = pose.compose(pose.inverse())
        assert_allclose([ident.x, ident.y, ident.yaw], [0, 0, 0], atol=1e-12)

    def test_apply(self):
        x, y = Pose2(1.0, 2.0, math.pi / 2).apply(1.0, 0.0)
        assert_allclose([x, y], [1.0, 3.0], atol=1e-12)

    def test_json(self):
        pose = Pose2.from_json({"x": 1, "y": 2, "yaw": 0.5})
        self.assertEqual(pose.to_json(), {"x": 1.0, "y": 2.0, "yaw": 0.5})
        with self.assertRaises(ValidationError):
            Pose2.from_json({"x": 1})


class TransformTestCase(unittest.TestCase):
    def setUp(self):
        self.spec = BevSpec(0.4, (-3.2, 3.2), (-3.2, 3.2))
        self.grid = make_rng(1).standard_normal((3, 16, 16))

    def test_same_pose_is_identity(self):
        pose = Pose2(5.0, 1.0, 0.3)
        out, valid = transform_to_ego(self.grid, pose, pose, self.spec)
        assert_allclose(out, self.grid, atol=1e-9)
        assert_array_equal(valid, 1.0)

    def test_one_cell_shift(self):
        out, valid = transform_to_ego(self.grid, Pose2(0.4, 0.0), Pose2(), self.spec)
        assert_allclose(out[:, :, 1:], self.grid[:, :, :-1], atol=1e-9)
        assert_array_equal(valid[0, :, 0], 0.0)
        assert_array_equal(out[:, :, 0], 0.0)

    def test_quarter_turn(self):
        # collaborator rotated by +90 degrees: its +x axis is the ego's +y axis
        out, valid = transform_to_ego(self.grid, Pose2(0.0, 0.0, math.pi / 2), Pose2(), self.spec)
        assert_array_equal(valid, 1.0)
        assert_allclose(out, np.rot90(self.grid, k=-1, axes=(1, 2)), atol=1e-9)

    def test_void_completion(self):
        h_t = np.ones((2, 4, 4))
        h_e = np.zeros((2, 4, 4))
        m_t = np.full((1, 4, 4), 0.9)
        m_e = np.full((1, 4, 4), 0.1)
        valid = np.zeros((1, 4, 4))
        valid[0, :2] = 1.0
        h, m = complete_voids(h_t, m_t, valid, h_e, m_e)
        assert_array_equal(h[:, :2], 1.0)
        assert_array_equal(h[:, 2:], 0.0)
        assert_array_equal(m[0, :2], 0.9)
        assert_array_equal(m[0, 2:], 0.1)
        with self.assertRaises(ShapeError):
            complete_voids(h_t, m_t, valid, np.zeros((3, 4, 4)), m_e)

    def test_void_completion_checkerboard(self):
        rng = make_rng(4)
        h_t, h_e = rng.standard_normal((2, 3, 6, 6))
        m_t, m_e = rng.random((2, 1, 6, 6))
        rows, cols = np.indices((6, 6))
        valid = ((rows + cols) % 2 == 0).astype(np.float64)[None]
        h, m = complete_voids(h_t, m_t, valid, h_e, m_e)
        for r, c in np.ndindex(6, 6):
            h_src, m_src = (h_t, m_t) if (r + c) % 2 == 0 else (h_e, m_e)
            assert_array_equal(h[:, r, c], h_src[:, r, c])
            self.assertEqual(m[0, r, c], m_src[0, r, c])
        again_h, again_m = complete_voids(h, m, valid, h_e, m_e)
        assert_array_equal(again_h, h)
        assert_array_equal(again_m, m)


class WeightingTestCase(unittest.TestCase):
    def test_bounds(self):
        rng = make_rng(4)
        for _ in range(20):
            m_i = rng.random((1, 8, 8))
            m_j = rng.random((1, 8, 8))
            w = observability_weighting(m_i, m_j)
            self.assertTrue((w > 0).all() and (w <= 0.5).all())
        same = rng.random((1, 8, 8))
        assert_allclose(observability_weighting(same, same), 0.5, atol=1e-9)

    def test_map_range(self):
        with self.assertRaises(ValidationError):
            ObservabilityMap(np.full((1, 2, 2), 1.5))
        with self.assertRaises(ShapeError):
            ObservabilityMap(np.zeros((2, 2, 2)))


class DomainLossTestCase(unittest.TestCase):
    def test_gradients_match_finite_differences(self):
        for seed in range(20):
            rng = make_rng(100 + seed)
            logits = rng.standard_normal((1, 6, 6)) * 2
            weights = rng.random((1, 6, 6)) * 0.5
            label = seed % 2
            result = domain_loss_and_grads(logits, label, weights)
            numeric = central_difference(
                lambda x: domain_loss_and_grads(x, label, weights).loss, logits.copy()
            )
            assert_allclose(result.grad_logits, numeric, rtol=1e-4, atol=1e-9)

    def test_gradient_reversal_is_exact(self):
        rng = make_rng(7)
        result = domain_loss_and_grads(rng.standard_normal((1, 5, 5)), 1, rng.random((1, 5, 5)))
        self.assertEqual(GRL_GAMMA, -0.1)
        assert_array_equal(result.grad_features, result.grad_logits * -0.1)

    def test_weight_scale_invariance(self):
        rng = make_rng(8)
        logits = rng.standard_normal((1, 5, 5))
        w = rng.random((1, 5, 5))
        a = domain_loss_and_grads(logits, 0, w).loss
        b = domain_loss_and_grads(logits, 0, w * 37.5).loss
        self.assertAlmostEqual(a, b, delta=1e-9)

    def test_extreme_logits_stay_finite(self):
        result = domain_loss_and_grads(np.array([[[800.0, -800.0]]]), 0, np.ones((1, 1, 2)))
        self.assertTrue(math.isfinite(result.loss))
        self.assertAlmostEqual(result.loss, 400.0)

    def test_errors(self):
        with self.assertRaises(DegenerateWeightingError):
            domain_loss_and_grads(np.zeros((1, 2, 2)), 0, np.zeros((1, 2, 2)))
        with self.assertRaises(ValidationError):
            domain_loss_and_grads(np.zeros((1, 2, 2)), 2, np.ones((1, 2, 2)))
        with self.assertRaises(ShapeError):
            domain_loss_and_grads(np.zeros((1, 2, 2)), 0, np.ones((1, 3, 3)))


class EstimatorTestCase(unittest.TestCase):
    def setUp(self):
        rng = make_rng(2)
        self.features = np.maximum(rng.standard_normal((8, 6, 6)), 0.0)
        self.weights = dict(init_foreground_weights(make_rng(0, 3), 8))
        self.weights.update(init_discriminator_weights(make_rng(0, 4), 8))

    def test_foreground_map(self):
        m = foreground_estimate(self.features, self.weights)
        self.assertIsInstance(m, ObservabilityMap)
        self.assertEqual(m.grid.shape, (1, 6, 6))
        # zero output layer: every cell at sigmoid(0)
        self.weights["fg.conv2.weight"] = np.zeros((1, 4, 1, 1))
        assert_array_equal(foreground_estimate(self.features, self.weights).grid, 0.5)

    def test_discriminator(self):
        spec = DiscriminatorSpec.from_weights(self.weights)
        self.assertEqual(discriminator_forward(self.features, spec).shape, (1, 6, 6))
        with self.assertRaises(ShapeError):
            discriminator_forward(np.zeros((4, 6, 6)), spec)

    def test_pgm(self):
        buf = io.BytesIO()
        write_pgm(buf, np.array([[[0.0, 1.0], [0.5, 2.0]]]))
        self.assertEqual(buf.getvalue(), b"P5\n2 2\n255\n" + bytes([0, 255, 128, 255]))
