# -*- coding: utf-8 -*-

import os
import tempfile
import unittest

from app import create_app
from app.exceptions import ConfigError
from app.sim.settings import apply_run_config, load_run_config, parse_run_config

RUN_CONFIG = """
scenario:
  template: straight
  speed: 10
ptam:
  window: 8
  xi_mode: learned
bev:
  x_range: [-6.4, 6.4]
sweep:
  delays_ms: [0, 200]
  noise: [[0.0, 0.0], [0.2, 0.2]]
codec:
"""


class RunConfigTestCase(unittest.TestCase):
    def test_flat_settings(self):
        flat = load_run_config(RUN_CONFIG)
        self.assertEqual(flat, {
            "SCENARIO_TEMPLATE": "straight",
            "SCENARIO_SPEED": 10,
            "PTAM_WINDOW": 8,
            "PTAM_XI_MODE": "learned",
            "BEV_X_RANGE": (-6.4, 6.4),
            "SWEEP_DELAYS_MS": [0, 200],
            "SWEEP_NOISE": [[0.0, 0.0], [0.2, 0.2]],
        })

    def test_empty_document(self):
        self.assertEqual(load_run_config(""), {})

    def test_errors_carry_paths(self):
        cases = [
            ("- a\n- b\n", "<root>"),
            ("render: {}\nwheels: {n: 4}\n", "wheels"),
            ("phd:\n  beta: 0.5\n", "phd.beta"),
            ("phd:\n  n_max: 2.5\n", "phd.n_max"),
            ("ifam:\n  eps: true\n", "ifam.eps"),
            ("ptam: 16\n", "ptam"),
            ("bev:\n  y_range: [1, 2, 3]\n", "bev.y_range"),
            ("sweep:\n  noise: [[0, 0], [1]]\n", "sweep.noise[1]"),
            ("scenario: [unclosed\n", "<yaml>"),
        ]
        for text, path in cases:
            with self.assertRaises(ConfigError) as ctx:
                load_run_config(text)
            self.assertEqual(ctx.exception.path, path, text)

    def test_parse_accepts_booleans_where_declared(self):
        self.assertEqual(parse_run_config({"domain": {"enabled": False}}), {"DOMAIN_ENABLED": False})

    def test_apply_updates_app(self):
        app = create_app("testing")
        fd, path = tempfile.mkstemp(suffix=".yaml")
        try:
            with os.fdopen(fd, "w") as f:
                f.write(RUN_CONFIG)
            apply_run_config(app, path)
        finally:
            os.remove(path)
        self.assertEqual(app.config["PTAM_WINDOW"], 8)
        self.assertEqual(app.config["BEV_X_RANGE"], (-6.4, 6.4))
        self.assertEqual(app.config["BEV_Y_RANGE"], (-12.8, 12.8))
