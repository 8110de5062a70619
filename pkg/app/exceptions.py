# -*- coding: utf-8 -*-


class ValidationError(ValueError):
    pass


class ShapeError(ValidationError):
    """tensor shapes or channel counts disagree"""


class WeightsError(ValidationError):
    """weight archive is malformed or a named tensor is missing/ill-shaped"""


class ConfigError(ValidationError):
    def __init__(self, path, message):
        super().__init__("%s: %s" % (path, message))
        self.path = path


class ScenarioError(ValidationError):
    pass


class DegenerateWeightingError(ValidationError):
    pass
