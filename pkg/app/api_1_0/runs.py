# -*- coding: utf-8 -*-

from dataclasses import fields

from flask import current_app, jsonify, request

from . import api
from ..exceptions import ValidationError
from ..sim.complexity import bench
from ..sim.pipeline import Pipeline, RunOptions
from ..sim.scenario import Scenario, generate_scenario

_RUN_OPTIONS = {f.name for f in fields(RunOptions)} - {"tau"}
_SCENARIO_KEYS = {
    "template": "SCENARIO_TEMPLATE",
    "speed": "SCENARIO_SPEED",
    "dt": "SCENARIO_DT",
    "duration": "SCENARIO_DURATION",
    "seed": "SCENARIO_SEED",
    "num_objects": "SCENARIO_NUM_OBJECTS",
    "agents": "SCENARIO_AGENTS",
}


def get_pipeline():
    """one pipeline per app; weights are built on first use"""
    pipeline = current_app.extensions.get("datasim.pipeline")
    if pipeline is None:
        pipeline = Pipeline.from_config(current_app.config)
        current_app.extensions["datasim.pipeline"] = pipeline
    return pipeline


def _json_body():
    body = request.get_json(silent=True)
    if body is None:
        body = {}
    if not isinstance(body, dict):
        raise ValidationError("request body must be a JSON object")
    return body


def scenario_from_settings(overrides):
    if not isinstance(overrides, dict):
        raise ValidationError("scenario settings must be an object")
    unknown = sorted(set(overrides) - set(_SCENARIO_KEYS))
    if unknown:
        raise ValidationError("unknown scenario settings: %s" % ", ".join(unknown))
    settings = dict(current_app.config)
    settings.update({_SCENARIO_KEYS[k]: v for k, v in overrides.items()})
    return generate_scenario(settings)


def run_options(json_options):
    if not isinstance(json_options, dict):
        raise ValidationError("options must be an object")
    options = dict(json_options)
    tau_ms = options.pop("tau_ms", 0)
    unknown = sorted(set(options) - _RUN_OPTIONS)
    if unknown:
        raise ValidationError("unknown run options: %s" % ", ".join(unknown))
    try:
        tau = float(tau_ms) / 1000.0
    except (TypeError, ValueError):
        raise ValidationError("tau_ms must be a number")
    return RunOptions.from_config(current_app.config, tau=tau, **options)


@api.route("/scenarios/", methods=["POST"])
def new_scenario():
    scenario = scenario_from_settings(_json_body().get("settings", {}))
    return jsonify(scenario.to_json()), 201


@api.route("/runs/", methods=["POST"])
def new_run():
    body = _json_body()
    if "scenario" in body:
        scenario = Scenario.from_json(body["scenario"])
    else:
        scenario = scenario_from_settings(body.get("settings", {}))
    options = run_options(body.get("options", {}))
    try:
        t = float(body.get("t", scenario.duration))
    except (TypeError, ValueError):
        raise ValidationError("t must be a number")
    report = get_pipeline().run(scenario, t, options)
    return jsonify(report.to_json())


@api.route("/bench")
def get_bench():
    channels = request.args.get("C", 64, type=int)
    height = request.args.get("H", 256, type=int)
    width = request.args.get("W", 128, type=int)
    l = request.args.get("l", 16, type=int)
    return jsonify(bench(channels, height, width, l))
