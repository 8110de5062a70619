# -*- coding: utf-8 -*-

import json
import unittest

from flask import url_for

from app import create_app


class APITestCase(unittest.TestCase):
    def setUp(self):
        self.app = create_app("testing")
        self.app_context = self.app.app_context()
        self.app_context.push()
        self.client = self.app.test_client()

    def tearDown(self):
        self.app_context.pop()

    def get_api_headers(self):
        return {"Accept": "application/json", "Content-Type": "application/json"}

    def post(self, endpoint, body):
        with self.app.test_request_context():
            url = url_for(endpoint)
        return self.client.post(url, headers=self.get_api_headers(), data=json.dumps(body))

    def test_404(self):
        """test unknown route, not in app.url_map"""
        response = self.client.get("/wrong/url", headers=self.get_api_headers())
        self.assertEqual(response.status_code, 404)
        json_response = json.loads(response.get_data(as_text=True))
        self.assertEqual(json_response["error"], "not found")

    def test_405(self):
        response = self.client.get("/api/v1.0/runs/", headers=self.get_api_headers())
        self.assertEqual(response.status_code, 405)
        self.assertEqual(response.get_json()["error"], "method not allowed")

    def test_new_scenario(self):
        response = self.post("api.new_scenario", {"settings": {"template": "straight", "seed": 3}})
        self.assertEqual(response.status_code, 201)
        json_response = response.get_json()
        self.assertEqual(json_response["template"], "straight")
        self.assertEqual(json_response["seed"], 3)
        self.assertEqual([a["id"] for a in json_response["agents"]], ["ego", "rsu"])

    def test_bad_scenario_settings(self):
        response = self.post("api.new_scenario", {"settings": {"template": "zigzag"}})
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.get_json()["path"], "scenario.template")
        response = self.post("api.new_scenario", {"settings": {"wheels": 4}})
        self.assertEqual(response.status_code, 400)
        self.assertNotIn("path", response.get_json())

    def test_run(self):
        scenario = self.post("api.new_scenario", {}).get_json()
        body = {
            "scenario": scenario,
            "options": {"tau_ms": 100, "ifam": False, "domain": False},
        }
        response = self.post("api.new_run", body)
        self.assertEqual(response.status_code, 200)
        report = response.get_json()
        self.assertEqual(report["tau_ms"], 100.0)
        self.assertEqual(report["t"], 1.0)
        self.assertIn("0.50", report["ap"])
        self.assertTrue(report["detector"].startswith("toy detector"))

    def test_bad_run_options(self):
        response = self.post("api.new_run", {"options": {"codec": "zip"}})
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.get_json()["path"], "codec.mode")
        response = self.post("api.new_run", {"options": {"tau_ms": "soon"}})
        self.assertEqual(response.status_code, 400)
        response = self.post("api.new_run", {"scenario": {"agents": []}})
        self.assertEqual(response.status_code, 400)
        response = self.post("api.new_run", [1, 2])
        self.assertEqual(response.status_code, 400)

    def test_bench(self):
        response = self.client.get("/api/v1.0/bench?C=64&H=256&W=128&l=16")
        self.assertEqual(response.status_code, 200)
        json_response = response.get_json()
        self.assertEqual(json_response["global"]["mul"], 6356992)
        self.assertEqual(json_response["blockwise"]["mul"], 11571712)
        response = self.client.get("/api/v1.0/bench?H=8&W=8&l=16")
        self.assertEqual(response.status_code, 400)
