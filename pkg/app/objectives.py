# -*- coding: utf-8 -*-
"""
Stage objectives of the three-stage schedule, evaluated only.

There is no learned detection head here, so the detection term is passed in
by the caller (the harness reports it as 0).
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class LossWeights:
    fore: float = 0.4
    domain: float = 1.0
    temporal: float = 1.0
    recon: float = 1.0

    @classmethod
    def from_config(cls, config):
        return cls(
            fore=config["LOSS_LAMBDA_FORE"],
            domain=config["LOSS_LAMBDA_DOMAIN"],
            temporal=config["LOSS_LAMBDA_TEMPORAL"],
            recon=config["LOSS_LAMBDA_RECON"],
        )


def stage1_objective(l_det, l_foreground, l_domain, weights=None):
    """detection + foreground estimation + adversarial domain alignment"""
    weights = weights or LossWeights()
    return l_det + weights.fore * l_foreground + weights.domain * l_domain


def stage2_objective(l_det, l_temporal, weights=None):
    weights = weights or LossWeights()
    return l_det + weights.temporal * l_temporal


def stage3_objective(l_det, l_recon, weights=None):
    weights = weights or LossWeights()
    return l_det + weights.recon * l_recon
