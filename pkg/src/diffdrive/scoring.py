"""Rule-based trajectory scoring and candidate selection.

Total cost is safety + comfort. Safety aggregates collision proximity,
distance-to-goal, heading deviation and speed deviation; comfort penalizes
peak lateral / longitudinal / centripetal accelerations. Lateral and
centripetal sub-costs share the v^2*kappa profile but read different
horizon segments (first half vs full), which keeps their weights
non-redundant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .scene import SceneContext
from .trajectory import (
    DEFAULT_EGO_RADIUS,
    DEFAULT_WHEELBASE,
    EgoStatus,
    EmptyTrajectory,
    KinematicProfile,
    Trajectory,
    derive_kinematics,
    min_obstacle_distance,
)

SIGMA_COLL = 1.0  # m

WEIGHT_DEFAULTS = {
    "w_coll": 5.0,
    "w_deviation": 3.5,
    "w_dis": 1.5,
    "w_speed": 2.5,
    "w_lat": 1.5,
    "w_lon": 4.5,
    "w_cent": 3.0,
}

WEIGHT_NAMES = tuple(WEIGHT_DEFAULTS)


class NoCandidates(ValueError):
    pass


@dataclass(frozen=True)
class ScorerWeights:
    w_coll: float = 5.0
    w_deviation: float = 3.5
    w_dis: float = 1.5
    w_speed: float = 2.5
    w_lat: float = 1.5
    w_lon: float = 4.5
    w_cent: float = 3.0

    def __post_init__(self):
        for name in WEIGHT_NAMES:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in WEIGHT_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerWeights":
        unknown = set(d) - set(WEIGHT_NAMES)
        if unknown:
            raise ValueError(f"unknown weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def replace(self, **kwargs) -> "ScorerWeights":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class CostBreakdown:
    c_coll: float
    c_dis: float
    c_deviation: float
    c_speed: float
    c_lat: float
    c_lon: float
    c_cent: float
    c_safety: float
    c_comfort: float
    c_total: float
    d_coll: float
    hard_collision: bool

    def as_dict(self) -> dict:
        return {
            "c_coll": self.c_coll,
            "c_dis": self.c_dis,
            "c_deviation": self.c_deviation,
            "c_speed": self.c_speed,
            "c_lat": self.c_lat,
            "c_lon": self.c_lon,
            "c_cent": self.c_cent,
            "c_safety": self.c_safety,
            "c_comfort": self.c_comfort,
            "c_total": self.c_total,
            "d_coll": self.d_coll,
            "hard_collision": self.hard_collision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostBreakdown":
        return cls(**{k: (bool(v) if k == "hard_collision" else float(v)) for k, v in d.items()})


def collision_cost(d_coll: float, sigma_coll: float = SIGMA_COLL) -> float:
    """exp(-d/sigma); caller is responsible for clamping d to >= -sigma."""
    return math.exp(-d_coll / sigma_coll)


def distance_cost(traj: Trajectory, p_target) -> float:
    if len(traj) == 0:
        raise EmptyTrajectory("cannot score an empty trajectory")
    return float(np.linalg.norm(traj.end - np.asarray(p_target, dtype=float)))


def deviation_cost(profile: KinematicProfile, theta_target: float) -> float:
    """Cumulative heading misalignment, sum of 1 - cos(yaw_i - target)."""
    return float(np.sum(1.0 - np.cos(profile.yaw - theta_target)))


def speed_cost(profile: KinematicProfile, v_target: float) -> float:
    """Squared deviation of mean speed (including the t=0 ego sample)."""
    v_bar = float(np.mean(np.concatenate([[profile.v0], profile.v])))
    return (v_bar - v_target) ** 2


def comfort_costs(profile: KinematicProfile, times: np.ndarray) -> tuple[float, float, float]:
    """(c_lat, c_lon, c_cent): peak |a_n| over first half, peak |a_t|,
    peak |v^2 kappa| over the full horizon."""
    half = times <= times[-1] / 2.0 + 1e-9
    c_lat = float(np.max(np.abs(profile.a_n[half])))
    c_lon = float(np.max(np.abs(profile.a_t)))
    c_cent = float(np.max(np.abs(profile.v**2 * profile.kappa)))
    return c_lat, c_lon, c_cent


def aggregate_costs(
    weights: ScorerWeights,
    c_coll: float,
    c_dis: float,
    c_deviation: float,
    c_speed: float,
    c_lat: float,
    c_lon: float,
    c_cent: float,
) -> tuple[float, float, float]:
    """Weighted (c_safety, c_comfort, c_total)."""
    c_safety = (
        weights.w_coll * c_coll
        + weights.w_dis * c_dis
        + weights.w_deviation * c_deviation
        + weights.w_speed * c_speed
    )
    c_comfort = weights.w_lat * c_lat + weights.w_lon * c_lon + weights.w_cent * c_cent
    return c_safety, c_comfort, c_safety + c_comfort


def score(
    traj: Trajectory,
    scene: SceneContext,
    ego: EgoStatus,
    weights: ScorerWeights = ScorerWeights(),
    *,
    wheelbase: float = DEFAULT_WHEELBASE,
    ego_radius: float = DEFAULT_EGO_RADIUS,
    sigma_coll: float = SIGMA_COLL,
) -> CostBreakdown:
    """Full cost breakdown of one candidate trajectory.

    The raw obstacle clearance is clamped to [-sigma_coll, inf) before the
    exponential so deep penetration cannot blow up the total; penetration is
    still reported through the hard_collision flag.
    """
    profile = derive_kinematics(traj, ego, wheelbase)
    d_raw = min_obstacle_distance(traj, scene, ego_radius)
    d_eff = max(d_raw, -sigma_coll)

    c_coll = collision_cost(d_eff, sigma_coll)
    c_dis = distance_cost(traj, scene.target_point)
    c_deviation = deviation_cost(profile, scene.target_heading)
    c_speed = speed_cost(profile, scene.target_speed)
    c_lat, c_lon, c_cent = comfort_costs(profile, traj.times())
    c_safety, c_comfort, c_total = aggregate_costs(
        weights, c_coll, c_dis, c_deviation, c_speed, c_lat, c_lon, c_cent
    )
    return CostBreakdown(
        c_coll=c_coll,
        c_dis=c_dis,
        c_deviation=c_deviation,
        c_speed=c_speed,
        c_lat=c_lat,
        c_lon=c_lon,
        c_cent=c_cent,
        c_safety=c_safety,
        c_comfort=c_comfort,
        c_total=c_total,
        d_coll=d_raw,
        hard_collision=d_raw < 0.0,
    )


def select_best(
    candidates,
    scene: SceneContext,
    ego: EgoStatus,
    weights: ScorerWeights = ScorerWeights(),
    **score_kwargs,
) -> tuple[int, list[CostBreakdown]]:
    """Argmin of c_total over candidates; ties go to the lowest index.

    Candidates may be Trajectory objects or an array [N, T, 2] of ego-frame
    waypoints (converted with the ego pose).
    """
    trajs = candidates_as_trajectories(candidates, ego)
    if len(trajs) == 0:
        raise NoCandidates("select_best needs at least one candidate")
    breakdowns = [score(t, scene, ego, weights, **score_kwargs) for t in trajs]
    totals = np.array([b.c_total for b in breakdowns])
    return int(np.argmin(totals)), breakdowns


def candidates_as_trajectories(candidates, ego: EgoStatus, dt: float = 0.5) -> list[Trajectory]:
    """Normalize candidate input into world-frame Trajectory objects."""
    if isinstance(candidates, (list, tuple)) and all(
        isinstance(c, Trajectory) for c in candidates
    ):
        return list(candidates)
    arr = np.asarray(candidates, dtype=float)
    if arr.ndim == 4:  # [B, N_a, T, 2] with B = 1
        if arr.shape[0] != 1:
            raise ValueError("expected a single-scene batch")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(f"cannot interpret candidates of shape {arr.shape}")
    from .geometry import to_world

    return [Trajectory.from_xy(to_world(c, ego.position, ego.yaw), dt) for c in arr]
