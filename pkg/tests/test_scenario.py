# -*- coding: utf-8 -*-

import json
import math
import unittest

from numpy.testing import assert_allclose

from app.domain import Pose2
from app.exceptions import ConfigError, ScenarioError
from app.pointcloud import OrientedBox
from app.sim.scenario import (
    CAR_SIZE,
    TURN_RATE,
    AgentTrack,
    ObjectTrack,
    Scenario,
    box_in_frame,
    generate_scenario,
)
from config import Config


def settings(**overrides):
    values = {k: getattr(Config, k) for k in dir(Config) if k.isupper()}
    values.update(overrides)
    return values


class GenerateTestCase(unittest.TestCase):
    def test_templates(self):
        counts = {"straight": 3, "crossing": 2, "turning": 1}
        for template, expected in counts.items():
            scenario = generate_scenario(settings(SCENARIO_TEMPLATE=template, SCENARIO_NUM_OBJECTS=3))
            self.assertEqual(len(scenario.objects), expected, template)
            self.assertEqual(scenario.template, template)
            self.assertEqual(scenario.frames, 11)
            self.assertEqual(scenario.ego.id, "ego")
            box = scenario.objects[0].box
            self.assertEqual((box.l, box.w, box.h), CAR_SIZE)

    def test_deterministic(self):
        a = generate_scenario(settings(SCENARIO_SEED=3), jitter=0.5)
        b = generate_scenario(settings(SCENARIO_SEED=3), jitter=0.5)
        c = generate_scenario(settings(SCENARIO_SEED=4), jitter=0.5)
        self.assertEqual(a, b)
        self.assertNotEqual(a, c)

    def test_straight_kinematics(self):
        scenario = generate_scenario(settings(SCENARIO_TEMPLATE="straight", SCENARIO_SPEED=10.0))
        track = scenario.objects[0]
        start, later = track.box_at(0.0), track.box_at(0.1)
        self.assertAlmostEqual(later.x - start.x, 1.0)
        self.assertAlmostEqual(later.y, start.y)
        self.assertEqual(later.yaw, start.yaw)

    def test_crossing_heads_along_y(self):
        scenario = generate_scenario(settings(SCENARIO_SPEED=8.0))
        second = scenario.objects[1]
        a, b = second.box_at(0.2), second.box_at(0.5)
        self.assertAlmostEqual(b.y - a.y, 2.4)
        self.assertAlmostEqual(b.x, a.x)
        self.assertAlmostEqual(a.yaw, math.pi / 2)

    def test_turning_stays_on_arc(self):
        scenario = generate_scenario(settings(SCENARIO_TEMPLATE="turning", SCENARIO_SPEED=5.0))
        track = scenario.objects[0]
        radius = 5.0 / TURN_RATE
        center = (track.box.x, track.box.y + radius)
        for t in (0.0, 0.3, 0.7, 1.0):
            box = track.box_at(t)
            self.assertAlmostEqual(math.hypot(box.x - center[0], box.y - center[1]), radius)
            self.assertAlmostEqual(box.yaw, TURN_RATE * t)

    def test_config_errors(self):
        cases = [
            (dict(SCENARIO_TEMPLATE="zigzag"), "scenario.template"),
            (dict(SCENARIO_SPEED=-1.0), "scenario.speed"),
            (dict(SCENARIO_DT=0.0), "scenario.dt"),
            (dict(SCENARIO_NUM_OBJECTS=0), "scenario.num_objects"),
            (dict(SCENARIO_AGENTS=[]), "scenario.agents"),
            (dict(SCENARIO_AGENTS=[{"id": "ego", "x": 0, "y": 0}, {"x": 1, "y": 1}]),
             "scenario.agents[1]"),
            (dict(SCENARIO_AGENTS=[{"id": "a", "x": 0, "y": 0}, {"id": "a", "x": 1, "y": 1}]),
             "scenario"),
        ]
        for overrides, path in cases:
            with self.assertRaises(ConfigError) as ctx:
                generate_scenario(settings(**overrides))
            self.assertEqual(ctx.exception.path, path, overrides)


class ScenarioTestCase(unittest.TestCase):
    def setUp(self):
        self.scenario = generate_scenario(
            settings(
                SCENARIO_AGENTS=[
                    {"id": "ego", "x": 0.0, "y": 0.0},
                    {"id": "car", "x": 0.0, "y": 5.0, "vx": 2.0},
                    {"id": "a-rsu", "x": 3.0, "y": 3.0, "yaw": 0.5},
                ]
            )
        )

    def test_collaborators_in_id_order(self):
        self.assertEqual([a.id for a in self.scenario.collaborators], ["a-rsu", "car"])
        self.assertTrue(self.scenario.agent("a-rsu").is_static)
        self.assertFalse(self.scenario.agent("car").is_static)

    def test_pose_interpolation(self):
        pose = self.scenario.agent_pose("car", 0.25)
        self.assertAlmostEqual(pose.x, 0.5)
        self.assertAlmostEqual(pose.y, 5.0)
        self.assertEqual(self.scenario.agent_pose("car", 0.2), self.scenario.agent("car").poses[2])

    def test_time_bounds(self):
        with self.assertRaises(ScenarioError):
            self.scenario.agent_pose("ego", 1.5)
        with self.assertRaises(ScenarioError):
            self.scenario.boxes_at(-0.1)
        self.assertEqual(len(self.scenario.boxes_at(1.3, extrapolate=True)), 2)
        with self.assertRaises(ScenarioError):
            self.scenario.agent("nobody")

    def test_json_round_trip(self):
        text = json.dumps(self.scenario.to_json())
        self.assertEqual(Scenario.from_json(json.loads(text)), self.scenario)

    def test_malformed_json(self):
        json_scenario = self.scenario.to_json()
        del json_scenario["dt"]
        with self.assertRaises(ScenarioError):
            Scenario.from_json(json_scenario)
        with self.assertRaises(ScenarioError):
            Scenario.from_json([])
        with self.assertRaises(ScenarioError):
            ObjectTrack.from_json({"box": {"x": 1}})

    def test_pose_count_must_match_frames(self):
        with self.assertRaises(ScenarioError):
            Scenario([AgentTrack("ego", [Pose2(0, 0, 0)] * 3)], [], duration=1.0, dt=0.1)

    def test_box_in_frame(self):
        box = OrientedBox(5.0, 3.0, 0.8, 4.0, 2.0, 1.6, math.pi / 2)
        local = box_in_frame(box, Pose2(2.0, 3.0, math.pi / 2))
        assert_allclose([local.x, local.y, local.yaw], [0.0, -3.0, 0.0], atol=1e-12)
