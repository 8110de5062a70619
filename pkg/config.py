# -*- coding: utf-8 -*-

import os

base_dir = os.path.abspath(os.path.dirname(__file__))


def _env_float(name, default):
    return float(os.environ.get(name, str(default)))


def _env_bool(name, default):
    return os.environ.get(name, str(default)).lower() in ["true", "on", "1"]


class Config:
    DATASIM_LOG_LEVEL = os.environ.get("DATASIM_LOG_LEVEL", "INFO")

    # scenario
    SCENARIO_TEMPLATE = os.environ.get("SCENARIO_TEMPLATE", "crossing")
    SCENARIO_SPEED = _env_float("SCENARIO_SPEED", 8.0)  # m/s
    SCENARIO_DT = _env_float("SCENARIO_DT", 0.1)  # sensor period, seconds
    SCENARIO_DURATION = _env_float("SCENARIO_DURATION", 1.0)
    SCENARIO_SEED = int(os.environ.get("SCENARIO_SEED", "7"))
    SCENARIO_NUM_OBJECTS = 1
    # ego first; ids define the fusion order of the rest
    SCENARIO_AGENTS = [
        {"id": "ego", "x": 0.0, "y": 0.0, "yaw": 0.0},
        {"id": "rsu", "x": -4.0, "y": 4.0, "yaw": 0.0},
    ]

    # bird's-eye-view grid, ego frame
    BEV_CELL_SIZE = 0.4
    BEV_X_RANGE = (-12.8, 12.8)
    BEV_Y_RANGE = (-12.8, 12.8)

    # proximal-region hierarchical downsampling
    PHD_ENABLED = True
    PHD_D_TH = 50.0
    PHD_N_MAX = 2
    PHD_ALPHA = 0.5
    PHD_BETA_IN = 0.6
    PHD_BETA_OUT = 0.8
    PHD_APPLY_TO_COLLABORATOR = False

    # progressive temporal alignment
    PTAM_ENABLED = True
    PTAM_WINDOW = 16
    PTAM_XI_MODE = "oracle"  # oracle | learned
    PTAM_MOTION_SOURCE = "ideal"  # ideal | estimated
    PTAM_STAGE2_SOURCE = "latest"  # latest | inter
    PTAM_STAGE2_FIELD = "scaled"  # scaled | literal
    PTAM_EMBED_BASE = 1.0e4
    PTAM_IDEAL_MARGIN = 1  # cells

    # instance-focused fusion
    IFAM_ENABLED = True
    IFAM_GROUPS = 8
    IFAM_SHUFFLE_GROUPS = 4
    IFAM_VERIFICATION = "per_channel"  # per_channel | single
    IFAM_COMBINE = "add"  # add | concat
    IFAM_EPS = 0.1

    CODEC_MODE = os.environ.get("CODEC_MODE", "identity")  # identity | fp16 | int8

    SWEEP_DELAYS_MS = [0, 100, 200, 300, 400, 500]
    SWEEP_NOISE = [[0.0, 0.0]]  # (sigma_local m, sigma_head deg)
    SWEEP_WORKERS = int(os.environ.get("SWEEP_WORKERS", "4"))

    # point-cloud renderer
    RENDER_DENSITY = 20.0  # object surface points per m^2 at the reference range
    RENDER_REFERENCE_RANGE = 10.0
    RENDER_MAX_OBJECT_POINTS = 4000
    RENDER_GROUND_POINTS = 3000

    # toy detector
    DETECT_THRESHOLD = 0.5
    DETECT_FG_SOURCE = "evidence"  # evidence | estimator
    DETECT_GROUND_CLEARANCE = 0.3
    DETECT_AP_METHOD = "11point"  # 11point | area

    DOMAIN_ENABLED = True

    # stage objective weights
    LOSS_LAMBDA_FORE = 0.4
    LOSS_LAMBDA_DOMAIN = 1.0
    LOSS_LAMBDA_TEMPORAL = 1.0
    LOSS_LAMBDA_RECON = 1.0

    WEIGHTS_SEED = int(os.environ.get("WEIGHTS_SEED", "2024"))
    WEIGHTS_ARCHIVE = os.environ.get("WEIGHTS_ARCHIVE")

    @staticmethod
    def init_app(app):
        import logging
        from logging import StreamHandler

        app.logger.setLevel(app.config["DATASIM_LOG_LEVEL"])
        if not any(isinstance(h, StreamHandler) for h in app.logger.handlers):
            handler = StreamHandler()
            handler.setFormatter(
                logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
            )
            app.logger.addHandler(handler)


class DevelopmentConfig(Config):
    DEBUG = True
    DATASIM_LOG_LEVEL = os.environ.get("DATASIM_LOG_LEVEL", "DEBUG")


class TestingConfig(Config):
    TESTING = True
    DATASIM_LOG_LEVEL = "WARNING"
    SWEEP_WORKERS = 2


class ProductionConfig(Config):
    @classmethod
    def init_app(cls, app):
        Config.init_app(app)

        # batch sweeps: warnings and errors only
        import logging

        if _env_bool("DATASIM_QUIET", False):
            app.logger.setLevel(logging.WARNING)


config = {
    "development": DevelopmentConfig,
    "testing": TestingConfig,
    "production": ProductionConfig,
    "default": DevelopmentConfig,
}
