"""Planar multi-agent scenes and their ground-truth trajectories.

A scene is fully determined by (maneuver, seed, index): ego starts on a
0.5 m grid near the origin heading +x, drives a constant-curvature arc at
constant speed, and is surrounded by a few constant-velocity disc agents.
Each information channel is deliberately partial: the exact turn geometry
only shows up in the infrastructure view's route arc, the exact speed only
in the vehicle view's speed bar, and the maneuver intent and start position
only in the prompt text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import rng_from_seed

STREAM_SCENE = 10
STREAM_NOISE = 11

WORLD_HALF = 32.0
DT = 0.5
T_HORIZON = 9
EGO_GRID_STEPS = 8            # ego grid covers [-4, 4] in 0.5 m steps
SPEED_CHOICES = (2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
TURN_DEG = 90.0
TURN_JITTER_DEG = 8.0
STRAIGHT_JITTER_DEG = 2.0
HIDDEN_AGENT_PROB = 0.4

MANEUVERS = ("straight", "left-turn", "right-turn")

# vehicle camera frustum, relative to ego (heading +x)
FRUSTUM_DEPTH = 24.0
FRUSTUM_HALF_WIDTH = 10.0


@dataclass(frozen=True)
class Agent:
    pos: tuple[float, float]
    vel: tuple[float, float]
    radius: float

    def at(self, t: float) -> np.ndarray:
        return np.array([self.pos[0] + self.vel[0] * t,
                         self.pos[1] + self.vel[1] * t])


@dataclass(frozen=True)
class Scene:
    ego_pos: tuple[float, float]
    ego_heading: float
    ego_speed: float
    maneuver: str
    turn_angle: float            # realized total heading change over the horizon, rad
    agents: tuple[Agent, ...]
    seed: int
    index: int = 0

    def __post_init__(self) -> None:
        if self.maneuver not in MANEUVERS:
            raise ValueError(f"unknown maneuver {self.maneuver!r}")
        if self.ego_speed < 0:
            raise ValueError("ego speed must be >= 0")
        for a in self.agents:
            if max(abs(a.pos[0]), abs(a.pos[1])) >= WORLD_HALF:
                raise ValueError(f"agent at {a.pos} outside world bounds")


def ground_truth(scene: Scene) -> np.ndarray:
    """T waypoints at DT spacing along a constant-curvature arc.

    Waypoint i sits at time (i+1)*DT; the heading sweeps linearly from the
    initial heading to initial + turn_angle across the horizon.
    """
    p0 = np.asarray(scene.ego_pos, dtype=float)
    psi0 = scene.ego_heading
    v = scene.ego_speed
    total_t = T_HORIZON * DT
    theta = scene.turn_angle
    times = DT * np.arange(1, T_HORIZON + 1)
    if abs(theta) < 1e-9:
        return np.stack([p0[0] + v * times * math.cos(psi0),
                         p0[1] + v * times * math.sin(psi0)], axis=1)
    radius = v * total_t / theta
    ang = psi0 + theta * times / total_t
    x = p0[0] + radius * (np.sin(ang) - math.sin(psi0))
    y = p0[1] - radius * (np.cos(ang) - math.cos(psi0))
    return np.stack([x, y], axis=1)


def vehicle_sees(scene: Scene, agent: Agent) -> bool:
    """Inside the forward camera frustum at t=0 (occlusion not modeled here)."""
    dx = agent.pos[0] - scene.ego_pos[0]
    dy = agent.pos[1] - scene.ego_pos[1]
    return 0.0 < dx <= FRUSTUM_DEPTH and abs(dy) <= FRUSTUM_HALF_WIDTH


def hidden_agent_count(scene: Scene) -> int:
    return sum(1 for a in scene.agents if not vehicle_sees(scene, a))


_MIRROR_MANEUVER = {"straight": "straight", "left-turn": "right-turn",
                    "right-turn": "left-turn"}


def mirror_scene(scene: Scene) -> Scene:
    """Reflect the whole scene about the ego's longitudinal axis (y -> -y).

    Ground truth, renders, and prompts of the mirrored scene are exact
    mirrors of the originals, which makes reflection a label-consistent
    training augmentation: nothing except the genuine direction cues can
    predict the sign of the lateral coordinates.
    """
    return Scene(
        ego_pos=(scene.ego_pos[0], -scene.ego_pos[1]),
        ego_heading=-scene.ego_heading,
        ego_speed=scene.ego_speed,
        maneuver=_MIRROR_MANEUVER[scene.maneuver],
        turn_angle=-scene.turn_angle,
        agents=tuple(Agent((a.pos[0], -a.pos[1]), (a.vel[0], -a.vel[1]), a.radius)
                     for a in scene.agents),
        seed=scene.seed,
        index=scene.index,
    )


def _clear_of_route(pos, vel, radius, tau, r_ego=1.0, margin=1.5) -> bool:
    times = DT * np.arange(1, T_HORIZON + 1)
    p = np.asarray(pos) + np.outer(times, np.asarray(vel))
    d = np.linalg.norm(p - tau, axis=1)
    return bool(np.all(d > r_ego + radius + margin))


def make_scene(maneuver: str, seed: int, index: int = 0) -> Scene:
    """Deterministic scene construction; every draw comes from one stream."""
    if maneuver not in MANEUVERS:
        raise ValueError(f"unknown maneuver {maneuver!r}")
    rng = rng_from_seed(seed, STREAM_SCENE, index)
    ego = (float(rng.integers(-EGO_GRID_STEPS, EGO_GRID_STEPS + 1)) * 0.5,
           float(rng.integers(-EGO_GRID_STEPS, EGO_GRID_STEPS + 1)) * 0.5)
    speed = float(SPEED_CHOICES[rng.integers(0, len(SPEED_CHOICES))])
    if maneuver == "straight":
        theta = math.radians(float(rng.uniform(-STRAIGHT_JITTER_DEG, STRAIGHT_JITTER_DEG)))
    else:
        sign = 1.0 if maneuver == "left-turn" else -1.0
        theta = sign * math.radians(
            TURN_DEG + float(rng.uniform(-TURN_JITTER_DEG, TURN_JITTER_DEG)))

    probe = Scene(ego, 0.0, speed, maneuver, theta, (), seed, index)
    tau = ground_truth(probe)

    agents: list[Agent] = []
    n_vis = int(rng.integers(0, 4))
    for _ in range(n_vis):
        for _attempt in range(20):
            dx = float(rng.uniform(3.0, FRUSTUM_DEPTH - 2.0))
            dy = float(rng.uniform(-FRUSTUM_HALF_WIDTH + 1, FRUSTUM_HALF_WIDTH - 1))
            pos = (ego[0] + dx, ego[1] + dy)
            vel = (float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)))
            radius = float(rng.uniform(0.5, 1.2))
            if _clear_of_route(pos, vel, radius, tau):
                agents.append(Agent(pos, vel, radius))
                break
    if rng.uniform() < HIDDEN_AGENT_PROB:
        # outside the frustum by construction: behind ego or far lateral
        if rng.uniform() < 0.5:
            pos = (ego[0] + float(rng.uniform(-10.0, -2.0)),
                   ego[1] + float(rng.uniform(-8.0, 8.0)))
        else:
            side = 1.0 if rng.uniform() < 0.5 else -1.0
            pos = (ego[0] + float(rng.uniform(2.0, 16.0)),
                   ego[1] + side * float(rng.uniform(FRUSTUM_HALF_WIDTH + 2, 15.0)))
        vel = (float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)))
        agents.append(Agent(pos, vel, float(rng.uniform(0.5, 1.2))))

    return Scene(ego, 0.0, speed, maneuver, theta, tuple(agents), seed, index)
