#  -*- coding: utf-8 -*-

import logging
import unittest

from flask import current_app

from app import create_app


class BasicTestCase(unittest.TestCase):
    def setUp(self):
        self.app = create_app("testing")
        self.app_context = self.app.app_context()
        # activate app_context
        self.app_context.push()

    def tearDown(self):
        self.app_context.pop()

    def test_app_exists(self):
        self.assertFalse(current_app is None)

    def test_app_is_testing(self):
        self.assertTrue(current_app.config["TESTING"])
        self.assertEqual(current_app.config["SWEEP_WORKERS"], 2)

    def test_library_loggers_hang_off_the_app_logger(self):
        # app.logger is named after the package, module loggers are its children
        self.assertEqual(current_app.logger.name, "app")
        child = logging.getLogger("app.temporal")
        self.assertIs(child.parent, current_app.logger)
        self.assertEqual(current_app.logger.level, logging.WARNING)

    def test_default_grid(self):
        from app.bev import BevSpec

        spec = BevSpec.from_config(current_app.config)
        self.assertEqual((spec.height, spec.width), (64, 64))
