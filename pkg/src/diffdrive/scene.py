"""Scene abstraction and planner conditioning.

The scene stands in for a perception stack: disc obstacles with constant
velocities, a lane centerline, and a goal (point, heading, speed). The
condition encoder flattens scene + ego + recent plan history into a fixed
layout vector, everything expressed in the current ego frame so the
encoding is invariant under rigid world transforms.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import rotate, to_local, wrap_angle
from .trajectory import CANONICAL_DT, CANONICAL_POINTS, EgoStatus, Trajectory


class ObstacleKind(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    STATIC = "static"


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float
    velocity: tuple[float, float] = (0.0, 0.0)
    kind: ObstacleKind = ObstacleKind.STATIC

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))
        object.__setattr__(self, "kind", ObstacleKind(self.kind))

    def position_at(self, t: float) -> np.ndarray:
        return np.asarray(self.center) + t * np.asarray(self.velocity)

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radius": self.radius,
            "velocity": list(self.velocity),
            "kind": self.kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Obstacle":
        return cls(
            center=tuple(d["center"]),
            radius=float(d["radius"]),
            velocity=tuple(d.get("velocity", (0.0, 0.0))),
            kind=ObstacleKind(d.get("kind", "static")),
        )


@dataclass(frozen=True)
class SceneContext:
    """Obstacles + lane + goal at a given timestamp."""

    obstacles: tuple[Obstacle, ...]
    lane_center: np.ndarray  # [M, 2], M >= 2
    target_point: tuple[float, float]
    target_heading: float
    target_speed: float
    timestamp: float = 0.0

    def __post_init__(self):
        lane = np.asarray(self.lane_center, dtype=float)
        if lane.ndim != 2 or lane.shape[1] != 2 or len(lane) < 2:
            raise ValueError("lane_center needs at least two 2-D points")
        if self.target_speed < 0:
            raise ValueError(f"target_speed must be >= 0, got {self.target_speed}")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "lane_center", lane)
        object.__setattr__(
            self, "target_point", (float(self.target_point[0]), float(self.target_point[1]))
        )

    def at_time(self, t: float) -> "SceneContext":
        """Extrapolate obstacle positions from this scene's timestamp to t."""
        delta = t - self.timestamp
        obstacles = tuple(
            Obstacle(tuple(o.position_at(delta)), o.radius, o.velocity, o.kind)
            for o in self.obstacles
        )
        return SceneContext(
            obstacles, self.lane_center, self.target_point, self.target_heading,
            self.target_speed, timestamp=t,
        )

    def to_dict(self) -> dict:
        return {
            "obstacles": [o.to_dict() for o in self.obstacles],
            "lane_center": self.lane_center.tolist(),
            "target": {
                "point": list(self.target_point),
                "heading": self.target_heading,
                "speed": self.target_speed,
            },
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SceneContext":
        tgt = d["target"]
        return cls(
            obstacles=tuple(Obstacle.from_dict(o) for o in d.get("obstacles", [])),
            lane_center=np.asarray(d["lane_center"], dtype=float),
            target_point=tuple(tgt["point"]),
            target_heading=float(tgt["heading"]),
            target_speed=float(tgt["speed"]),
            timestamp=float(d.get("timestamp", 0.0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "SceneContext":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class HistoryEntry:
    """One previously selected plan, in the world frame, with its kinematics."""

    trajectory: Trajectory
    v: np.ndarray
    a: np.ndarray
    yaw: np.ndarray
    sim_time: float


class HistoryBuffer:
    """Ring buffer of the last few selected plans, oldest to newest."""

    def __init__(self, capacity: int = 2):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self._entries: deque[HistoryEntry] = deque(maxlen=capacity)

    def push(self, entry: HistoryEntry) -> None:
        self._entries.append(entry)

    @property
    def entries(self) -> tuple[HistoryEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


# entry kinds drive model-side scaling of the condition vector
KIND_POS = 0
KIND_VEL = 1
KIND_ACC = 2
KIND_UNIT = 3
KIND_RADIUS = 4


@dataclass(frozen=True)
class ConditionConfig:
    """Layout of the condition vector; lengths are fixed per configuration."""

    k_nearest: int = 6
    history_len: int = 2
    horizon: int = CANONICAL_POINTS
    horizon_dt: float = CANONICAL_DT

    EGO_BLOCK: int = field(default=6, init=False)  # x, y, sin, cos, v, a
    GOAL_BLOCK: int = field(default=5, init=False)  # dx, dy, sin, cos, v_target
    OBSTACLE_BLOCK: int = field(default=5, init=False)  # dx, dy, vx, vy, radius
    HISTORY_POINT: int = field(default=6, init=False)  # x, y, v, a, sin, cos

    @property
    def dim(self) -> int:
        return (
            self.EGO_BLOCK
            + self.GOAL_BLOCK
            + self.OBSTACLE_BLOCK * self.k_nearest
            + self.HISTORY_POINT * self.horizon * self.history_len
        )

    def entry_kinds(self) -> np.ndarray:
        kinds = [KIND_POS, KIND_POS, KIND_UNIT, KIND_UNIT, KIND_VEL, KIND_ACC]
        kinds += [KIND_POS, KIND_POS, KIND_UNIT, KIND_UNIT, KIND_VEL]
        kinds += [KIND_POS, KIND_POS, KIND_VEL, KIND_VEL, KIND_RADIUS] * self.k_nearest
        kinds += (
            [KIND_POS, KIND_POS, KIND_VEL, KIND_ACC, KIND_UNIT, KIND_UNIT]
            * self.horizon
            * self.history_len
        )
        return np.array(kinds, dtype=int)

    def scale_vector(self, position_scale: float = 20.0, speed_scale: float = 15.0) -> np.ndarray:
        """Per-entry divisors used to whiten conditions before the denoiser."""
        kinds = self.entry_kinds()
        scales = np.ones(self.dim)
        scales[kinds == KIND_POS] = position_scale
        scales[(kinds == KIND_VEL) | (kinds == KIND_ACC)] = speed_scale
        return scales

    def to_dict(self) -> dict:
        return {
            "k_nearest": self.k_nearest,
            "history_len": self.history_len,
            "horizon": self.horizon,
            "horizon_dt": self.horizon_dt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionConfig":
        return cls(
            k_nearest=int(d["k_nearest"]),
            history_len=int(d["history_len"]),
            horizon=int(d["horizon"]),
            horizon_dt=float(d["horizon_dt"]),
        )


DEFAULT_CONDITION_CONFIG = ConditionConfig()


def _bootstrap_history_block(ego: EgoStatus, config: ConditionConfig) -> np.ndarray:
    """Constant-velocity straight rollout of the ego, already in ego frame."""
    t = config.horizon_dt * np.arange(1, config.horizon + 1)
    block = np.zeros((config.horizon, config.HISTORY_POINT))
    block[:, 0] = ego.speed * t  # x ahead, y = 0
    block[:, 2] = ego.speed
    block[:, 4] = 0.0  # sin of relative yaw
    block[:, 5] = 1.0  # cos of relative yaw
    return block.ravel()


def _history_entry_block(entry: HistoryEntry, ego: EgoStatus, config: ConditionConfig) -> np.ndarray:
    if len(entry.trajectory) != config.horizon:
        raise ValueError(
            f"history entry has {len(entry.trajectory)} points, expected {config.horizon}"
        )
    rel = to_local(entry.trajectory.xy(), ego.position, ego.yaw)
    rel_yaw = wrap_angle(entry.yaw - ego.yaw)
    block = np.column_stack(
        [rel[:, 0], rel[:, 1], entry.v, entry.a, np.sin(rel_yaw), np.cos(rel_yaw)]
    )
    return block.ravel()


def encode_condition(
    scene: SceneContext,
    ego: EgoStatus,
    history: HistoryBuffer | None = None,
    config: ConditionConfig = DEFAULT_CONDITION_CONFIG,
) -> np.ndarray:
    """Flatten (scene, ego, history) into the fixed-layout condition vector.

    Layout: ego block [x, y, sin, cos, v, a] (x = y = sin = 0, cos = 1 by
    construction, kept for layout stability), goal block, the K nearest
    obstacles sorted nearest-first and zero-padded, then H history slots of
    flattened per-point [x, y, v, a, sin, cos]. Missing history slots (the
    oldest ones) are filled with a constant-velocity ego rollout.
    """
    parts: list[np.ndarray] = []

    parts.append(np.array([0.0, 0.0, 0.0, 1.0, ego.speed, ego.accel]))

    goal_rel = to_local(np.asarray(scene.target_point), ego.position, ego.yaw)
    rel_heading = wrap_angle(scene.target_heading - ego.yaw)
    parts.append(
        np.array(
            [goal_rel[0], goal_rel[1], np.sin(rel_heading), np.cos(rel_heading), scene.target_speed]
        )
    )

    obs_block = np.zeros((config.k_nearest, config.OBSTACLE_BLOCK))
    if scene.obstacles:
        centers = np.array([o.center for o in scene.obstacles])
        dists = np.linalg.norm(centers - np.asarray(ego.position)[None, :], axis=1)
        order = np.argsort(dists, kind="stable")[: config.k_nearest]
        for row, idx in enumerate(order):
            o = scene.obstacles[idx]
            rel = to_local(np.asarray(o.center), ego.position, ego.yaw)
            vel = rotate(np.asarray(o.velocity), ego.yaw)
            obs_block[row] = [rel[0], rel[1], vel[0], vel[1], o.radius]
    parts.append(obs_block.ravel())

    entries = history.entries if history is not None else ()
    entries = entries[-config.history_len :]
    n_missing = config.history_len - len(entries)
    for _ in range(n_missing):
        parts.append(_bootstrap_history_block(ego, config))
    for entry in entries:
        parts.append(_history_entry_block(entry, ego, config))

    vec = np.concatenate(parts)
    assert vec.shape == (config.dim,)
    return vec
