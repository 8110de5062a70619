# -*- coding: utf-8 -*-
"""
End-to-end runs: render every agent, featurize, align the delayed
collaborator features, transmit them, fuse into the ego frame and score the
toy detector. Sweeps fan runs out over delay and pose-noise grids.
"""

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .. import weights as weights_io
from ..bev import (
    BevSpec,
    MultiScaleFeatures,
    backbone_forward,
    bev_project,
    evidence_map,
    pillar_encode,
    rasterize_boxes,
)
from ..domain import (
    DiscriminatorSpec,
    Pose2,
    complete_voids,
    discriminator_forward,
    domain_loss_and_grads,
    foreground_estimate,
    observability_weighting,
    transform_to_ego,
)
from ..exceptions import ConfigError, ScenarioError
from ..fusion import aggregation_layer, foreground_loss, fuse_agents, ifam_refine
from ..numerics import cosine, make_rng
from ..objectives import LossWeights, stage1_objective, stage2_objective, stage3_objective
from ..pointcloud import PhdConfig, phd_apply
from ..temporal import (
    DelayContext,
    MotionField,
    PtamOptions,
    ptam_stage1,
    ptam_stage2,
    stage2_warp,
    temporal_loss,
    warp_features,
    window_cosines,
)
from .codec import CodecConfig, Packet, transmit
from .complexity import OpCounter, count_similarity_ops
from .detect import AP_METHODS, DETECTOR_NOTE, evaluate_detection
from .render import RenderOptions, render_pointcloud
from .scenario import box_in_frame

logger = logging.getLogger(__name__)

MOTION_SOURCES = ("ideal", "estimated")
FG_SOURCES = ("evidence", "estimator")
LEVELS = 3

# focal terms need p strictly inside (0, 1)
_PROB_FLOOR = 1e-7

CSV_HEADER = ["metric", "value", "tau_ms", "sigma_local_m", "sigma_head_deg"]


@dataclass(frozen=True)
class RunOptions:
    tau: float = 0.0  # seconds
    phd: bool = True
    phd_collaborator: bool = False
    ptam: bool = True
    ifam: bool = True
    domain: bool = True
    xi_mode: str = "oracle"
    motion_source: str = "ideal"
    stage2_source: str = "latest"
    stage2_field: str = "scaled"
    codec: str = "identity"
    sigma_local: float = 0.0  # meters
    sigma_head: float = 0.0  # degrees
    window: int = 16
    ideal_margin: int = 1  # cells
    fg_source: str = "evidence"
    threshold: float = 0.5
    clearance: float = 0.3
    ap_method: str = "11point"
    frame: int = 0
    sweep_index: int = 0

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigError("run.tau", "must be non-negative")
        if self.motion_source not in MOTION_SOURCES:
            raise ConfigError("ptam.motion_source", "must be one of %s" % (MOTION_SOURCES,))
        if self.fg_source not in FG_SOURCES:
            raise ConfigError("detect.fg_source", "must be one of %s" % (FG_SOURCES,))
        if self.ap_method not in AP_METHODS:
            raise ConfigError("detect.ap_method", "must be one of %s" % (AP_METHODS,))
        if self.sigma_local < 0 or self.sigma_head < 0:
            raise ConfigError("sweep.noise", "noise levels must be non-negative")
        if self.window < 1:
            raise ConfigError("ptam.window", "must be positive")
        if self.ideal_margin < 0:
            raise ConfigError("ptam.ideal_margin", "must be non-negative")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("detect.threshold", "must be in [0, 1]")
        # option values owned by other modules fail here, not mid-run
        PtamOptions(self.stage2_source, self.stage2_field)
        CodecConfig(self.codec)
        DelayContext(self.tau, 1.0, self.xi_mode)

    @property
    def noiseless(self):
        return self.sigma_local == 0.0 and self.sigma_head == 0.0

    @classmethod
    def from_config(cls, config, **overrides):
        options = dict(
            phd=config["PHD_ENABLED"],
            phd_collaborator=config["PHD_APPLY_TO_COLLABORATOR"],
            ptam=config["PTAM_ENABLED"],
            ifam=config["IFAM_ENABLED"],
            domain=config["DOMAIN_ENABLED"],
            xi_mode=config["PTAM_XI_MODE"],
            motion_source=config["PTAM_MOTION_SOURCE"],
            stage2_source=config["PTAM_STAGE2_SOURCE"],
            stage2_field=config["PTAM_STAGE2_FIELD"],
            codec=config["CODEC_MODE"],
            window=config["PTAM_WINDOW"],
            ideal_margin=config["PTAM_IDEAL_MARGIN"],
            fg_source=config["DETECT_FG_SOURCE"],
            threshold=config["DETECT_THRESHOLD"],
            clearance=config["DETECT_GROUND_CLEARANCE"],
            ap_method=config["DETECT_AP_METHOD"],
        )
        options.update(overrides)
        return cls(**options)


@dataclass
class RunReport:
    t: float
    tau_ms: float
    sigma_local_m: float
    sigma_head_deg: float
    noiseless: bool
    options: Dict[str, object]
    ap: Dict[str, float]
    mean_iou: float
    matches: Dict[str, list]
    detections: List[dict]
    cosine_pre: Optional[float]
    cosine_post: Optional[float]
    fused_cosine: float
    xi: List[List[float]]
    codec_mse: float
    wire_bytes: int
    losses: Dict[str, float]
    op_counts: Dict[str, dict]
    collaborators: List[str] = field(default_factory=list)
    detector: str = DETECTOR_NOTE

    def to_json(self):
        return asdict(self)

    def metrics(self):
        """(name, value) pairs for sweep tables"""
        out = [
            ("iou", self.mean_iou),
            ("ap50", self.ap["0.50"]),
            ("ap70", self.ap["0.70"]),
            ("fused_cos", self.fused_cosine),
        ]
        if self.cosine_pre is not None:
            out += [("cos_pre", self.cosine_pre), ("cos_post", self.cosine_post)]
        return out


def ideal_motion(scenario, agent_id, t_src, t_dst, spec, margin=1, levels=LEVELS):
    """
    Ground-truth motion fields in the agent's frame, indexed at t_dst.

    On every object footprint at t_dst (grown by `margin` cells) the field
    holds the rigid displacement from t_src per sensor period, so that
    xi = (t_dst - t_src) / dt recovers the whole motion. Cells the objects
    vacated get sampling weight 0, all others 1.
    """
    agent = scenario.agent(agent_id)
    if not agent.is_static:
        logger.warning("ideal motion assumes a static agent; %r moves", agent_id)
    pose = agent.poses[0]
    periods = (t_dst - t_src) / scenario.dt
    src_boxes = [box_in_frame(b, pose) for b in scenario.boxes_at(t_src, extrapolate=True)]
    dst_boxes = [box_in_frame(b, pose) for b in scenario.boxes_at(t_dst, extrapolate=True)]

    fields = []
    for level in range(levels):
        cell = spec.cell_size * 2 ** level
        grown = margin * cell
        xs, ys = spec.cell_centers(level)
        xy = np.stack([xs.ravel(), ys.ravel()], axis=1)
        dp = np.zeros((2,) + xs.shape)
        covered = np.zeros(xs.shape, dtype=bool)
        for dst in dst_boxes:
            inside = dst.footprint_contains(xy, grown).reshape(xs.shape)
            covered |= inside
        vacated = (rasterize_boxes(src_boxes, spec, grown, level)[0] > 0) & ~covered
        if periods > 0:
            for src, dst in zip(src_boxes, dst_boxes):
                inside = dst.footprint_contains(xy, grown).reshape(xs.shape)
                if not inside.any():
                    continue
                # carry each destination cell back along the rigid motion dst -> src
                local = dst.local_coords(
                    np.stack([xs[inside], ys[inside], np.full(inside.sum(), dst.z)], axis=1)
                )
                c, s = math.cos(src.yaw), math.sin(src.yaw)
                sx = src.x + c * local[:, 0] - s * local[:, 1]
                sy = src.y + s * local[:, 0] + c * local[:, 1]
                dp[0][inside] = (xs[inside] - sx) / cell / periods
                dp[1][inside] = (ys[inside] - sy) / cell / periods
        fields.append(MotionField(dp, np.where(vacated, 0.0, 1.0)[None]))
    return fields


def pose_noise(pose, sigma_local, sigma_head, rng):
    """Gaussian position noise in meters and heading noise in degrees"""
    if sigma_local == 0.0 and sigma_head == 0.0:
        return pose
    dx, dy = rng.normal(0.0, sigma_local, size=2)
    dyaw = rng.normal(0.0, math.radians(sigma_head))
    return Pose2(pose.x + dx, pose.y + dy, pose.yaw + dyaw)


class Pipeline:
    """renderer, featurizer and model weights shared by every run"""

    def __init__(self, spec, phd=None, render=None, weights=None, loss_weights=None,
                 ifam_groups=8, ifam_shuffle_groups=4, ifam_verification="per_channel",
                 ifam_combine="add", embed_base=1.0e4):
        self.spec = spec
        self.phd = phd or PhdConfig()
        self.render = render or RenderOptions()
        self.weights = weights if weights is not None else weights_io.default_weights(0)
        self.loss_weights = loss_weights or LossWeights()
        self.ifam_groups = ifam_groups
        self.ifam_shuffle_groups = ifam_shuffle_groups
        self.ifam_verification = ifam_verification
        self.ifam_combine = ifam_combine
        self.embed_base = embed_base
        aggregation_layer(self.weights, ifam_combine)

    @classmethod
    def from_config(cls, config):
        archive = config.get("WEIGHTS_ARCHIVE")
        if archive:
            weights = weights_io.load(archive)
        else:
            weights = weights_io.default_weights(config["WEIGHTS_SEED"])
            weights["ifam.eps"] = np.full(1, float(config["IFAM_EPS"]))
        return cls(
            BevSpec.from_config(config),
            PhdConfig.from_config(config),
            RenderOptions.from_config(config),
            weights,
            loss_weights=LossWeights.from_config(config),
            ifam_groups=config["IFAM_GROUPS"],
            ifam_shuffle_groups=config["IFAM_SHUFFLE_GROUPS"],
            ifam_verification=config["IFAM_VERIFICATION"],
            ifam_combine=config["IFAM_COMBINE"],
            embed_base=config["PTAM_EMBED_BASE"],
        )

    def featurize(self, scenario, agent_id, t, use_phd=False, rng=None):
        """(multi-scale features, pillar tensor) of one agent at t"""
        cloud = render_pointcloud(scenario, agent_id, t, self.spec, self.render)
        if use_phd:
            pose = scenario.agent_pose(agent_id, t)
            boxes = [box_in_frame(b, pose) for b in scenario.boxes_at(t)]
            before = len(cloud)
            cloud = phd_apply(cloud, boxes, (0.0, 0.0), self.phd, rng)
            logger.debug("phd %s@%.2f: %d -> %d points", agent_id, t, before, len(cloud))
        pillars = pillar_encode(cloud, self.spec)
        return backbone_forward(pillars, self.weights), pillars

    def observability(self, features):
        return foreground_estimate(features, self.weights).grid

    def fuse(self, agents_bev, agents_maps, ifam=True):
        """ego-frame grids of every agent, ego first, to one fused grid"""
        if ifam:
            agents_bev = [
                ifam_refine(h, m, self.weights, self.ifam_groups, self.ifam_shuffle_groups,
                            self.ifam_verification, self.ifam_combine)
                for h, m in zip(agents_bev, agents_maps)
            ]
        return fuse_agents(agents_bev, self.weights)

    def run(self, scenario, t, options=None, maps=None, features=None):
        """
        One pipeline pass at time t. When `maps` is a dict it receives the
        ego-frame debug grids (foreground, evidence, observability). When
        `features` is a dict it receives the fused grid and the reference
        fused from ground-truth-time collaborator features at exact poses.
        """
        options = options or RunOptions()
        started = time.perf_counter()
        dt, tau, l = scenario.dt, options.tau, options.window
        scenario.check_time(t)
        if t - tau - dt < -1e-9:
            raise ScenarioError("t=%.3f is earlier than tau + dT = %.3f" % (t, tau + dt))
        t_latest = t - tau
        t_prev = max(t_latest - dt, 0.0)
        rng = make_rng(scenario.seed, options.frame, options.sweep_index)
        ptam_options = PtamOptions(options.stage2_source, options.stage2_field, self.embed_base)
        codec = CodecConfig(options.codec)
        counter = OpCounter()
        need_maps = options.ifam or options.domain or options.fg_source == "estimator"

        ego = scenario.ego
        ego_pose = scenario.agent_pose(ego.id, t)
        ego_ms, ego_pillars = self.featurize(scenario, ego.id, t, options.phd, rng)
        ego_bev = bev_project(ego_ms, self.weights)
        m_ego = self.observability(ego_bev) if need_maps else None
        agents_bev, agents_maps = [ego_bev], [m_ego]
        reference_bev, reference_maps = [ego_bev], [m_ego]
        evidences = [evidence_map(ego_pillars, options.clearance)]
        completed = []

        cos_pre, cos_post, xis, mses = [], [], [], []
        wire = 0
        l_temporal = 0.0
        use_phd = options.phd and options.phd_collaborator
        for index, collab in enumerate(scenario.collaborators, start=1):
            prev_ms, _ = self.featurize(scenario, collab.id, t_prev, use_phd, rng)
            latest_ms, latest_pillars = self.featurize(scenario, collab.id, t_latest, use_phd, rng)
            truth_ms, _ = self.featurize(scenario, collab.id, t, use_phd, rng)
            latest_evidence = evidence_map(latest_pillars, options.clearance)
            ideal = options.motion_source == "ideal"

            if options.ptam:
                fields1 = None
                if ideal:
                    fields1 = ideal_motion(
                        scenario, collab.id, t_latest, t_latest + dt, self.spec, options.ideal_margin
                    )
                inter, stage1 = ptam_stage1(prev_ms.scales, latest_ms.scales, self.weights, fields1)
                inter_evidence = warp_features(latest_evidence, stage1[0].dp, 1.0, stage1[0].w_samp)
                packet = Packet(
                    latest_ms.scales,
                    stage1,
                    {"evidence": latest_evidence, "inter_evidence": inter_evidence},
                    inter,
                )
            else:
                packet = Packet(latest_ms.scales, [], {"evidence": latest_evidence})
            reception = transmit(packet, tau, codec, dt, options.xi_mode)
            received = reception.packet
            mses.append(reception.mean_mse)
            wire += reception.wire_bytes

            if options.ptam:
                fields2 = None
                if ideal:
                    fields2 = ideal_motion(
                        scenario, collab.id, t_latest, t, self.spec, options.ideal_margin
                    )
                final, stage2, xi = ptam_stage2(
                    received.features, received.inter, received.motion, reception.context,
                    self.weights, ptam_options, fields2,
                )
                evidence = stage2_warp(
                    received.extras["evidence"], received.extras["inter_evidence"],
                    received.motion[0], stage2[0], xi[0], ptam_options,
                )
                xis.append([float(x) for x in xi])
                if tau >= dt:
                    truth_inter, _ = self.featurize(scenario, collab.id, t_latest + dt, use_phd, rng)
                    l_temporal += temporal_loss(received.inter, truth_inter.scales, l, counter).total
                l_temporal += temporal_loss(final, truth_ms.scales, l, counter).total
                cos_post.append(float(np.mean(window_cosines(final, truth_ms.scales, l))))
            else:
                final = received.features
                evidence = received.extras["evidence"]
            cos_pre.append(float(np.mean(window_cosines(received.features, truth_ms.scales, l))))

            collab_bev = bev_project(MultiScaleFeatures.from_scales(final), self.weights)
            pose = scenario.agent_pose(collab.id, t_latest)
            noise_rng = make_rng(scenario.seed, options.frame, options.sweep_index, index)
            pose = pose_noise(pose, options.sigma_local, options.sigma_head, noise_rng)
            h_trans, valid = transform_to_ego(collab_bev, pose, ego_pose, self.spec)
            ev_trans, _ = transform_to_ego(np.clip(evidence, 0.0, 1.0), pose, ego_pose, self.spec)
            agents_bev.append(h_trans)
            evidences.append(ev_trans)
            truth_bev = bev_project(truth_ms, self.weights)
            truth_pose = scenario.agent_pose(collab.id, t)
            h_ref, _ = transform_to_ego(truth_bev, truth_pose, ego_pose, self.spec)
            reference_bev.append(h_ref)
            if need_maps:
                m_collab = self.observability(collab_bev)
                m_trans, _ = transform_to_ego(m_collab, pose, ego_pose, self.spec)
                agents_maps.append(m_trans)
                completed.append(complete_voids(h_trans, m_trans, valid, ego_bev, m_ego))
            if options.ifam:
                m_ref, _ = transform_to_ego(
                    self.observability(truth_bev), truth_pose, ego_pose, self.spec
                )
                reference_maps.append(m_ref)

        losses = {"temporal": l_temporal, "domain": 0.0, "foreground": 0.0}
        if options.domain and completed:
            disc = DiscriminatorSpec.from_weights(self.weights)
            ego_logits = discriminator_forward(ego_bev, disc)
            values = []
            for h_comp, m_comp in completed:
                w = observability_weighting(m_ego, m_comp)
                ego_loss = domain_loss_and_grads(ego_logits, 0, w)
                collab_loss = domain_loss_and_grads(discriminator_forward(h_comp, disc), 1, w)
                values.append(0.5 * (ego_loss.loss + collab_loss.loss))
            losses["domain"] = float(np.mean(values))

        fused = self.fuse(agents_bev, agents_maps, options.ifam)
        reference = self.fuse(reference_bev, reference_maps, options.ifam)
        fused_cos = cosine(fused, reference)
        if features is not None:
            features["fused"] = fused
            features["reference"] = reference

        gt_boxes = [box_in_frame(b, ego_pose) for b in scenario.boxes_at(t)]
        if options.fg_source == "evidence":
            fg = np.max(np.stack(evidences), axis=0)
        else:
            fg = self.observability(fused)
        if maps is not None:
            maps["foreground"] = fg
            maps["ego_evidence"] = evidences[0]
            if m_ego is not None:
                maps["ego_observability"] = m_ego
        detection = evaluate_detection(
            fg, gt_boxes, self.spec, options.threshold, method=options.ap_method
        )

        if need_maps:
            p = np.clip(m_ego, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
            losses["foreground"] = foreground_loss(p, gt_boxes, self.spec)[0]
        losses["recon"] = float(np.mean(mses)) if mses else 0.0
        losses["stage1"] = stage1_objective(0.0, losses["foreground"], losses["domain"], self.loss_weights)
        losses["stage2"] = stage2_objective(0.0, losses["temporal"], self.loss_weights)
        losses["stage3"] = stage3_objective(0.0, losses["recon"], self.loss_weights)

        logger.info(
            "run t=%.2f tau=%dms ptam=%s ifam=%s xi=%s: iou %.3f ap50 %.3f fused %.4f (%.2fs)",
            t, round(tau * 1000), options.ptam, options.ifam, xis, detection.mean_iou,
            detection.ap["0.50"], fused_cos, time.perf_counter() - started,
        )
        channels, h, w = ego_ms.large.shape
        ops = {
            "measured": counter.to_json(),
            "global": count_similarity_ops(channels, h, w).to_json(),
        }
        if min(h, w) >= l:
            ops["blockwise"] = count_similarity_ops(channels, h, w, l, "blockwise").to_json()
        pre = float(np.mean(cos_pre)) if cos_pre else None
        return RunReport(
            t=t,
            tau_ms=round(tau * 1000.0, 6),
            sigma_local_m=options.sigma_local,
            sigma_head_deg=options.sigma_head,
            noiseless=options.noiseless,
            options=asdict(options),
            ap=detection.ap,
            mean_iou=detection.mean_iou,
            matches=detection.matches,
            detections=[d.to_json() for d in detection.detections],
            cosine_pre=pre,
            cosine_post=float(np.mean(cos_post)) if cos_post else pre,
            fused_cosine=fused_cos,
            xi=xis,
            codec_mse=losses["recon"],
            wire_bytes=wire,
            losses=losses,
            op_counts=ops,
            collaborators=[c.id for c in scenario.collaborators],
        )


def run_pipeline(pipeline, scenario, t, options=None):
    return pipeline.run(scenario, t, options)


def sweep_jobs(times, delays_ms, noise, dt):
    """(frame, t, tau_ms, sigma_local, sigma_head, ptam) for every run of a sweep"""
    jobs = []
    for frame, t in enumerate(times):
        for tau_ms in delays_ms:
            if t - tau_ms / 1000.0 - dt < -1e-9:
                logger.info("skipping t=%.2f tau=%sms: not enough history", t, tau_ms)
                continue
            for sigma_local, sigma_head in noise:
                for ptam in (True, False):
                    jobs.append((frame, t, tau_ms, sigma_local, sigma_head, ptam))
    return jobs


def sweep(pipeline, scenario, delays_ms, noise=((0.0, 0.0),), base=None, times=None, workers=4):
    """
    Runs with and without PTAM over delays x noise (x frames), concurrently.
    Returns rows (metric, value, tau_ms, sigma_local_m, sigma_head_deg); a
    metric over several frames is their mean.
    """
    base = base or RunOptions()
    times = list(times) if times else [scenario.duration]
    jobs = sweep_jobs(times, delays_ms, noise, scenario.dt)

    def work(index):
        frame, t, tau_ms, sigma_local, sigma_head, ptam = jobs[index]
        options = replace(
            base, tau=tau_ms / 1000.0, sigma_local=sigma_local, sigma_head=sigma_head,
            ptam=ptam, frame=frame, sweep_index=index,
        )
        return pipeline.run(scenario, t, options)

    logger.info("sweep: %d runs on %d workers", len(jobs), workers)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(work, range(len(jobs))))

    table = {}
    for (_, _, tau_ms, sigma_local, sigma_head, ptam), report in zip(jobs, reports):
        for name, value in report.metrics():
            if name.startswith("cos_"):
                if not ptam:
                    continue
                key = name
            else:
                key = name + ("_ptam" if ptam else "_no_ptam")
            table.setdefault((key, tau_ms, sigma_local, sigma_head), []).append(value)
    return [
        (key, float(np.mean(values)), tau_ms, sigma_local, sigma_head)
        for (key, tau_ms, sigma_local, sigma_head), values in table.items()
    ]


def write_sweep_csv(stream, rows):
    writer = csv.writer(stream)
    writer.writerow(CSV_HEADER)
    for metric, value, tau_ms, sigma_local, sigma_head in rows:
        writer.writerow([metric, "%.6f" % value, tau_ms, sigma_local, sigma_head])


def read_sweep_csv(stream):
    """rows back as {(metric, tau_ms, sigma_local_m, sigma_head_deg): value}"""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ConfigError("sweep.csv", "unexpected header %s" % header)
    return {
        (metric, float(tau), float(sl), float(sh)): float(value)
        for metric, value, tau, sl, sh in reader
    }
