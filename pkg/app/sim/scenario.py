# -*- coding: utf-8 -*-
"""
Multi-agent scenes: static or moving agents and rigid objects driving at
constant speed, straight or along a circular arc.
"""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

from ..domain import Pose2
from ..exceptions import ConfigError, ScenarioError, ValidationError
from ..numerics import make_rng
from ..pointcloud import OrientedBox

TEMPLATES = ("straight", "crossing", "turning")

# length, width, height of every generated vehicle
CAR_SIZE = (4.6, 2.0, 1.6)
TURN_RATE = math.pi / 4  # rad/s

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class ObjectTrack:
    box: OrientedBox  # state at t = 0
    velocity: Tuple[float, float] = (0.0, 0.0)
    yaw_rate: float = 0.0

    @property
    def speed(self):
        return math.hypot(*self.velocity)

    def box_at(self, t):
        """closed-form rigid state; the velocity turns with the box on an arc"""
        vx, vy = self.velocity
        b = self.box
        if self.yaw_rate == 0.0:
            x, y = b.x + vx * t, b.y + vy * t
        else:
            heading = math.atan2(vy, vx)
            radius = self.speed / self.yaw_rate
            turned = heading + self.yaw_rate * t
            x = b.x + radius * (math.sin(turned) - math.sin(heading))
            y = b.y - radius * (math.cos(turned) - math.cos(heading))
        return OrientedBox(x, y, b.z, b.l, b.w, b.h, b.yaw + self.yaw_rate * t)

    def to_json(self):
        return {
            "box": self.box.to_json(),
            "velocity": list(self.velocity),
            "yaw_rate": self.yaw_rate,
        }

    @staticmethod
    def from_json(json_object):
        try:
            return ObjectTrack(
                OrientedBox.from_json(json_object["box"]),
                tuple(float(v) for v in json_object.get("velocity", (0.0, 0.0))),
                float(json_object.get("yaw_rate", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError("malformed object: %s" % e)


@dataclass(frozen=True)
class AgentTrack:
    id: str
    poses: List[Pose2]  # one per frame, frame k at t = k * dt

    @property
    def is_static(self):
        first = self.poses[0]
        return all(p == first for p in self.poses)

    def to_json(self):
        return {"id": self.id, "poses": [p.to_json() for p in self.poses]}

    @staticmethod
    def from_json(json_agent):
        try:
            return AgentTrack(
                str(json_agent["id"]), [Pose2.from_json(p) for p in json_agent["poses"]]
            )
        except (KeyError, TypeError) as e:
            raise ScenarioError("malformed agent: %s" % e)


@dataclass(frozen=True)
class Scenario:
    agents: List[AgentTrack]
    objects: List[ObjectTrack]
    duration: float = 1.0
    dt: float = 0.1
    seed: int = 0
    template: str = "custom"
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("sensor period must be positive")
        if self.duration < 0:
            raise ScenarioError("duration must be non-negative")
        if not self.agents:
            raise ScenarioError("scenario has no agents")
        for agent in self.agents:
            if len(agent.poses) != self.frames:
                raise ScenarioError(
                    "agent %r has %d poses for %d frames" % (agent.id, len(agent.poses), self.frames)
                )
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate agent ids in %s" % ids)
        object.__setattr__(self, "_index", {a.id: a for a in self.agents})

    @property
    def frames(self):
        return int(round(self.duration / self.dt)) + 1

    @property
    def ego(self):
        return self.agents[0]

    @property
    def collaborators(self):
        """every agent but the ego, in id order"""
        return sorted(self.agents[1:], key=lambda a: a.id)

    def agent(self, agent_id):
        try:
            return self._index[agent_id]
        except KeyError:
            raise ScenarioError("unknown agent %r" % agent_id)

    def check_time(self, t):
        if t < -_TIME_TOL or t > self.duration + _TIME_TOL:
            raise ScenarioError("t=%.3f outside [0, %.3f]" % (t, self.duration))

    def agent_pose(self, agent_id, t):
        """pose at t, linear between frames"""
        self.check_time(t)
        poses = self.agent(agent_id).poses
        pos = min(max(t / self.dt, 0.0), len(poses) - 1)
        k = min(int(math.floor(pos + _TIME_TOL)), len(poses) - 1)
        frac = pos - k
        if frac <= _TIME_TOL or k + 1 >= len(poses):
            return poses[k]
        a, b = poses[k], poses[k + 1]
        dyaw = math.atan2(math.sin(b.yaw - a.yaw), math.cos(b.yaw - a.yaw))
        return Pose2(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y), a.yaw + frac * dyaw)

    def boxes_at(self, t, extrapolate=False):
        """world-frame boxes; extrapolate allows t past the scenario end"""
        if not extrapolate:
            self.check_time(t)
        return [obj.box_at(t) for obj in self.objects]

    def to_json(self):
        return {
            "template": self.template,
            "duration": self.duration,
            "dt": self.dt,
            "seed": self.seed,
            "agents": [a.to_json() for a in self.agents],
            "objects": [o.to_json() for o in self.objects],
        }

    @staticmethod
    def from_json(json_scenario):
        if not isinstance(json_scenario, dict):
            raise ScenarioError("scenario must be a JSON object")
        try:
            return Scenario(
                agents=[AgentTrack.from_json(a) for a in json_scenario["agents"]],
                objects=[ObjectTrack.from_json(o) for o in json_scenario.get("objects", [])],
                duration=float(json_scenario["duration"]),
                dt=float(json_scenario["dt"]),
                seed=int(json_scenario.get("seed", 0)),
                template=str(json_scenario.get("template", "custom")),
            )
        except (KeyError, TypeError) as e:
            raise ScenarioError("scenario is missing field %s" % e)


def box_in_frame(box, pose):
    """world box expressed in the local frame of pose"""
    inv = pose.inverse()
    x, y = inv.apply(box.x, box.y)
    return OrientedBox(float(x), float(y), box.z, box.l, box.w, box.h, box.yaw - pose.yaw)


def _car(x, y, yaw):
    l, w, h = CAR_SIZE
    return OrientedBox(x, y, h / 2.0, l, w, h, yaw)


def _template_objects(template, speed, count, rng, jitter):
    def start(x, y):
        if jitter:
            dx, dy = rng.normal(0.0, jitter, size=2)
            return x + dx, y + dy
        return x, y

    objects = []
    if template == "straight":
        for k in range(count):
            x, y = start(-8.0, -4.0 + 4.0 * k)
            objects.append(ObjectTrack(_car(x, y, 0.0), (speed, 0.0)))
    elif template == "crossing":
        x, y = start(-8.0, -4.0)
        objects.append(ObjectTrack(_car(x, y, 0.0), (speed, 0.0)))
        x, y = start(4.0, -8.0)
        objects.append(ObjectTrack(_car(x, y, math.pi / 2), (0.0, speed)))
    else:
        x, y = start(-6.0, -6.0)
        objects.append(ObjectTrack(_car(x, y, 0.0), (speed, 0.0), TURN_RATE))
    return objects


def _agent_tracks(agents, frames, dt):
    tracks = []
    for i, agent in enumerate(agents):
        path = "scenario.agents[%d]" % i
        try:
            base = Pose2(float(agent["x"]), float(agent["y"]), float(agent.get("yaw", 0.0)))
            vx, vy = float(agent.get("vx", 0.0)), float(agent.get("vy", 0.0))
            agent_id = str(agent["id"])
        except (KeyError, TypeError, ValueError, ValidationError) as e:
            raise ConfigError(path, "malformed agent (%s)" % e)
        poses = [Pose2(base.x + vx * k * dt, base.y + vy * k * dt, base.yaw) for k in range(frames)]
        tracks.append(AgentTrack(agent_id, poses))
    return tracks


def generate_scenario(config, jitter=0.0):
    """
    Scene from SCENARIO_* settings. Templates: "straight" (num_objects cars
    side by side along +x), "crossing" (two cars, +x and +y) and "turning"
    (one car on a left-hand arc).
    """
    template = config["SCENARIO_TEMPLATE"]
    if template not in TEMPLATES:
        raise ConfigError("scenario.template", "must be one of %s" % (TEMPLATES,))
    speed = float(config["SCENARIO_SPEED"])
    dt = float(config["SCENARIO_DT"])
    duration = float(config["SCENARIO_DURATION"])
    seed = int(config["SCENARIO_SEED"])
    count = int(config.get("SCENARIO_NUM_OBJECTS", 1))
    if speed < 0:
        raise ConfigError("scenario.speed", "must be non-negative")
    if not dt > 0:
        raise ConfigError("scenario.dt", "must be positive")
    if duration < 0:
        raise ConfigError("scenario.duration", "must be non-negative")
    if count < 1:
        raise ConfigError("scenario.num_objects", "must be at least 1")
    agents = config["SCENARIO_AGENTS"]
    if not agents:
        raise ConfigError("scenario.agents", "at least the ego agent is required")

    frames = int(round(duration / dt)) + 1
    rng = make_rng(seed, 0)
    try:
        return Scenario(
            agents=_agent_tracks(agents, frames, dt),
            objects=_template_objects(template, speed, count, rng, jitter),
            duration=duration,
            dt=dt,
            seed=seed,
            template=template,
        )
    except ScenarioError as e:
        raise ConfigError("scenario", str(e))

