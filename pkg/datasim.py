#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import os

from dotenv import load_dotenv

# "flask run" loads .env by itself, plain "python datasim.py" imports don't
dotenv_path = os.path.join(os.path.dirname(__file__), ".env")
if os.path.exists(dotenv_path):
    load_dotenv(dotenv_path)

COV = None
if os.environ.get("DATASIM_COVERAGE"):
    import coverage

    COV = coverage.coverage(branch=True, include="app/*")
    COV.start()

import functools
import json
import sys

import click

from app import create_app
from app.exceptions import ValidationError

app = create_app(os.getenv("DATASIM_CONFIG") or "default")


def reports_errors(f):
    """library validation errors become clean CLI failures"""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationError as e:
            raise click.ClickException(str(e))

    return wrapper


def config_option(f):
    return click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="YAML run config overriding the app settings.",
    )(f)


def _apply_config(config_path):
    if config_path:
        from app.sim.settings import apply_run_config

        apply_run_config(app, config_path)


def _load_scenario(path):
    from app.sim.scenario import Scenario, generate_scenario

    if path is None:
        return generate_scenario(app.config)
    with open(path) as f:
        return Scenario.from_json(json.load(f))


def _emit(payload, output):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if output is None:
        click.echo(text)
    else:
        with open(output, "w") as f:
            f.write(text + "\n")
        click.echo("wrote %s" % output, err=True)


@app.shell_context_processor
def make_shell_context():
    """shell context to auto import modules in shell environ"""
    from app.sim.pipeline import Pipeline, RunOptions
    from app.sim.scenario import generate_scenario

    return dict(app=app, Pipeline=Pipeline, RunOptions=RunOptions, generate_scenario=generate_scenario)


@app.cli.command()
@config_option
@click.option("--template", default=None, help="straight, crossing or turning.")
@click.option("--seed", type=int, default=None, help="Scenario seed.")
@click.option("-o", "--output", default=None, help="Scenario JSON file (default stdout).")
@reports_errors
def gen(config_path, template, seed, output):
    """Generate a scenario and write it as JSON."""
    from app.sim.scenario import generate_scenario

    _apply_config(config_path)
    settings = dict(app.config)
    if template is not None:
        settings["SCENARIO_TEMPLATE"] = template
    if seed is not None:
        settings["SCENARIO_SEED"] = seed
    _emit(generate_scenario(settings).to_json(), output)


@app.cli.command()
@config_option
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Scenario JSON (default: generated from the config).")
@click.option("--t", "t", type=float, default=None, help="Ego time in seconds (default: end).")
@click.option("--tau-ms", type=float, default=0.0, help="Transmission delay.")
@click.option("--ptam/--no-ptam", default=None, help="Toggle temporal alignment.")
@click.option("--ifam/--no-ifam", default=None, help="Toggle instance-focused fusion.")
@click.option("--phd/--no-phd", default=None, help="Toggle proximal downsampling.")
@click.option("--codec", default=None, help="identity, fp16 or int8.")
@click.option("--xi-mode", default=None, help="oracle or learned.")
@click.option("--sigma-local", type=float, default=0.0, help="Pose noise, meters.")
@click.option("--sigma-head", type=float, default=0.0, help="Heading noise, degrees.")
@click.option("--pgm-dir", type=click.Path(file_okay=False), default=None,
              help="Directory for PGM debug maps.")
@click.option("-o", "--output", default=None, help="Report JSON file (default stdout).")
@reports_errors
def simulate(config_path, scenario_path, t, tau_ms, ptam, ifam, phd, codec, xi_mode,
             sigma_local, sigma_head, pgm_dir, output):
    """Run the pipeline once and print the report."""
    from app.domain import export_pgm
    from app.sim.pipeline import Pipeline, RunOptions

    _apply_config(config_path)
    scenario = _load_scenario(scenario_path)
    overrides = dict(tau=tau_ms / 1000.0, sigma_local=sigma_local, sigma_head=sigma_head)
    for name, value in (("ptam", ptam), ("ifam", ifam), ("phd", phd), ("codec", codec),
                        ("xi_mode", xi_mode)):
        if value is not None:
            overrides[name] = value
    options = RunOptions.from_config(app.config, **overrides)
    maps = {} if pgm_dir else None
    report = Pipeline.from_config(app.config).run(
        scenario, scenario.duration if t is None else t, options, maps
    )
    if pgm_dir:
        os.makedirs(pgm_dir, exist_ok=True)
        for name, grid in maps.items():
            export_pgm(os.path.join(pgm_dir, name + ".pgm"), grid)
    _emit(report.to_json(), output)


@app.cli.command()
@config_option
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Scenario JSON (default: generated from the config).")
@click.option("--delays", default=None, help="Comma-separated delays in ms.")
@click.option("--frames", type=int, default=1, help="Ego frames, counted back from the end.")
@click.option("--ifam/--no-ifam", default=None, help="Toggle instance-focused fusion.")
@click.option("-o", "--output", default=None, help="CSV file (default stdout).")
@reports_errors
def sweep(config_path, scenario_path, delays, frames, ifam, output):
    """Sweep delay and pose noise, with and without PTAM, into a CSV."""
    from app.sim.pipeline import Pipeline, RunOptions, sweep as run_sweep, write_sweep_csv

    _apply_config(config_path)
    scenario = _load_scenario(scenario_path)
    if delays:
        try:
            delays_ms = [float(d) for d in delays.split(",")]
        except ValueError:
            raise click.BadParameter("expected comma-separated numbers", param_hint="--delays")
    else:
        delays_ms = list(app.config["SWEEP_DELAYS_MS"])
    if frames < 1:
        raise click.BadParameter("must be at least 1", param_hint="--frames")
    times = [scenario.duration - k * scenario.dt for k in range(frames)][::-1]
    overrides = {} if ifam is None else {"ifam": ifam}
    rows = run_sweep(
        Pipeline.from_config(app.config),
        scenario,
        delays_ms,
        [tuple(pair) for pair in app.config["SWEEP_NOISE"]],
        base=RunOptions.from_config(app.config, **overrides),
        times=times,
        workers=app.config["SWEEP_WORKERS"],
    )
    if output is None:
        write_sweep_csv(sys.stdout, rows)
    else:
        with open(output, "w", newline="") as f:
            write_sweep_csv(f, rows)
        click.echo("wrote %d rows to %s" % (len(rows), output), err=True)


@app.cli.command()
@click.option("-C", "channels", type=int, default=64, help="Channels.")
@click.option("-H", "height", type=int, default=256, help="Grid height.")
@click.option("-W", "width", type=int, default=128, help="Grid width.")
@click.option("-l", "window", type=int, default=16, help="Window size.")
@click.option("-o", "--output", default=None, help="JSON file (default stdout).")
@reports_errors
def bench(channels, height, width, window, output):
    """Operation counts of the similarity loss, global vs windowed."""
    from app.sim.complexity import bench as count

    _emit(count(channels, height, width, window), output)


@app.cli.command()
@click.option(
    "--coverage/--no-coverage", default=False, help="Run tests under code coverage."
)
@click.argument("test_names", nargs=-1)
def check(coverage, test_names):
    """Run the property suite."""
    if coverage and not os.environ.get("DATASIM_COVERAGE"):
        import subprocess

        os.environ["DATASIM_COVERAGE"] = "1"
        sys.exit(subprocess.call(sys.argv))

    import unittest

    if test_names:
        tests = unittest.TestLoader().loadTestsFromNames(test_names)
    else:
        tests = unittest.TestLoader().discover("tests")
    result = unittest.TextTestRunner(verbosity=2).run(tests)
    if COV:
        import shutil

        COV.stop()
        COV.save()
        print("Coverage Summary:")
        COV.report()
        covdir = os.path.join(os.path.abspath(os.path.dirname(__file__)), "tmp/coverage")
        shutil.rmtree(covdir, ignore_errors=True)
        COV.html_report(directory=covdir)
        print("HTML version: file://%s/index.html" % covdir)
        COV.erase()
    sys.exit(0 if result.wasSuccessful() else 1)
