# -*- coding: utf-8 -*-
"""
Structured run-config files.

A YAML document with one mapping per section; every key maps onto one of
the flat upper-case settings of config.Config, e.g. ``phd.beta_in`` onto
``PHD_BETA_IN``. Unknown sections or keys and wrongly typed values raise
ConfigError with the dotted path.
"""

import yaml

from ..exceptions import ConfigError

_NUMBER = (int, float)

# section -> key -> (flat setting, accepted types)
SCHEMA = {
    "scenario": {
        "template": ("SCENARIO_TEMPLATE", str),
        "speed": ("SCENARIO_SPEED", _NUMBER),
        "dt": ("SCENARIO_DT", _NUMBER),
        "duration": ("SCENARIO_DURATION", _NUMBER),
        "seed": ("SCENARIO_SEED", int),
        "num_objects": ("SCENARIO_NUM_OBJECTS", int),
        "agents": ("SCENARIO_AGENTS", list),
    },
    "bev": {
        "cell_size": ("BEV_CELL_SIZE", _NUMBER),
        "x_range": ("BEV_X_RANGE", list),
        "y_range": ("BEV_Y_RANGE", list),
    },
    "phd": {
        "enabled": ("PHD_ENABLED", bool),
        "d_th": ("PHD_D_TH", _NUMBER),
        "n_max": ("PHD_N_MAX", int),
        "alpha": ("PHD_ALPHA", _NUMBER),
        "beta_in": ("PHD_BETA_IN", _NUMBER),
        "beta_out": ("PHD_BETA_OUT", _NUMBER),
        "apply_to_collaborator": ("PHD_APPLY_TO_COLLABORATOR", bool),
    },
    "ptam": {
        "enabled": ("PTAM_ENABLED", bool),
        "window": ("PTAM_WINDOW", int),
        "xi_mode": ("PTAM_XI_MODE", str),
        "motion_source": ("PTAM_MOTION_SOURCE", str),
        "stage2_source": ("PTAM_STAGE2_SOURCE", str),
        "stage2_field": ("PTAM_STAGE2_FIELD", str),
        "embed_base": ("PTAM_EMBED_BASE", _NUMBER),
        "ideal_margin": ("PTAM_IDEAL_MARGIN", int),
    },
    "ifam": {
        "enabled": ("IFAM_ENABLED", bool),
        "groups": ("IFAM_GROUPS", int),
        "shuffle_groups": ("IFAM_SHUFFLE_GROUPS", int),
        "verification": ("IFAM_VERIFICATION", str),
        "combine": ("IFAM_COMBINE", str),
        "eps": ("IFAM_EPS", _NUMBER),
    },
    "codec": {
        "mode": ("CODEC_MODE", str),
    },
    "sweep": {
        "delays_ms": ("SWEEP_DELAYS_MS", list),
        "noise": ("SWEEP_NOISE", list),
        "workers": ("SWEEP_WORKERS", int),
    },
    "render": {
        "density": ("RENDER_DENSITY", _NUMBER),
        "reference_range": ("RENDER_REFERENCE_RANGE", _NUMBER),
        "max_object_points": ("RENDER_MAX_OBJECT_POINTS", int),
        "ground_points": ("RENDER_GROUND_POINTS", int),
    },
    "detect": {
        "threshold": ("DETECT_THRESHOLD", _NUMBER),
        "fg_source": ("DETECT_FG_SOURCE", str),
        "ground_clearance": ("DETECT_GROUND_CLEARANCE", _NUMBER),
        "ap_method": ("DETECT_AP_METHOD", str),
    },
    "domain": {
        "enabled": ("DOMAIN_ENABLED", bool),
    },
    "loss": {
        "lambda_fore": ("LOSS_LAMBDA_FORE", _NUMBER),
        "lambda_domain": ("LOSS_LAMBDA_DOMAIN", _NUMBER),
        "lambda_temporal": ("LOSS_LAMBDA_TEMPORAL", _NUMBER),
        "lambda_recon": ("LOSS_LAMBDA_RECON", _NUMBER),
    },
    "weights": {
        "seed": ("WEIGHTS_SEED", int),
        "archive": ("WEIGHTS_ARCHIVE", str),
    },
}


def _check_type(path, value, types):
    # bool is an int subclass; keep the two apart
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(path, "expected a number or string, got a boolean")
    if not isinstance(value, types):
        names = types.__name__ if isinstance(types, type) else "number"
        raise ConfigError(path, "expected %s, got %s" % (names, type(value).__name__))


def parse_run_config(document):
    """flat settings from an already parsed document"""
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigError("<root>", "run config must be a mapping of sections")
    flat = {}
    for section, body in document.items():
        if section not in SCHEMA:
            raise ConfigError(str(section), "unknown section")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(section, "section must be a mapping")
        for key, value in body.items():
            path = "%s.%s" % (section, key)
            if key not in SCHEMA[section]:
                raise ConfigError(path, "unknown key")
            name, types = SCHEMA[section][key]
            _check_type(path, value, types)
            if name in ("BEV_X_RANGE", "BEV_Y_RANGE"):
                if len(value) != 2 or not all(isinstance(v, _NUMBER) for v in value):
                    raise ConfigError(path, "expected [lo, hi]")
                value = tuple(float(v) for v in value)
            elif name == "SWEEP_NOISE":
                for i, pair in enumerate(value):
                    if not isinstance(pair, list) or len(pair) != 2:
                        raise ConfigError("%s[%d]" % (path, i), "expected [sigma_local_m, sigma_head_deg]")
            flat[name] = value
    return flat


def load_run_config(stream):
    """flat settings from a YAML file object or string"""
    try:
        document = yaml.safe_load(stream)
    except yaml.YAMLError as e:
        raise ConfigError("<yaml>", str(e))
    return parse_run_config(document)


def apply_run_config(app, path):
    with open(path) as f:
        flat = load_run_config(f)
    app.config.update(flat)
    app.logger.info("run config %s: %d settings", path, len(flat))
    return flat
