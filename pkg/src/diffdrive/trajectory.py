"""Trajectory containers and finite-difference kinematics.

All quantities are SI: meters, seconds, radians. A trajectory is a timed
sequence of 2-D waypoints on a uniform grid; the canonical planning horizon
is 6 points at t = 0.5 .. 3.0 s (dt = 0.5 s). The implicit t = 0 sample is
the ego state, which anchors every finite-difference stencil.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .geometry import wrap_angle

if TYPE_CHECKING:  # pragma: no cover
    from .scene import SceneContext

# Reported when a scene has no obstacles at all.
NO_OBSTACLE_DISTANCE = 1e6

DEFAULT_WHEELBASE = 2.7  # m, typical passenger car
DEFAULT_EGO_RADIUS = 1.0  # m, disc footprint
LOW_SPEED_GUARD = 0.1  # m/s, below this curvature is forced to 0

CANONICAL_DT = 0.5
CANONICAL_POINTS = 6


class TrajectoryError(ValueError):
    pass


class TooFewPoints(TrajectoryError):
    pass


class NonUniformSpacing(TrajectoryError):
    pass


class NonCanonicalTrajectory(TrajectoryError):
    """Trajectory is not on the canonical 6-point / 0.5 s grid."""


class EmptyTrajectory(TrajectoryError):
    pass


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    t: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.t)):
            raise TrajectoryError("waypoint coordinates must be finite")
        if self.t < 0:
            raise TrajectoryError(f"waypoint time must be >= 0, got {self.t}")


@dataclass(frozen=True)
class Trajectory:
    """Ordered waypoints with uniform time spacing `dt`.

    The first waypoint sits at t = dt; t = 0 belongs to the ego state and is
    supplied separately wherever kinematics are derived.
    """

    points: tuple[Waypoint, ...]
    dt: float

    def __post_init__(self):
        if len(self.points) == 0:
            raise EmptyTrajectory("trajectory has no points")
        if self.dt <= 0:
            raise NonUniformSpacing(f"dt must be positive, got {self.dt}")
        ts = np.array([p.t for p in self.points])
        if len(ts) >= 1 and abs(ts[0] - self.dt) > 1e-6:
            raise NonUniformSpacing(
                f"first waypoint must sit at t = dt ({self.dt}), got {ts[0]}"
            )
        if len(ts) >= 2:
            gaps = np.diff(ts)
            if np.any(gaps <= 0) or np.any(np.abs(gaps - self.dt) > 1e-6):
                raise NonUniformSpacing("waypoint times must increase by dt exactly")

    def __len__(self) -> int:
        return len(self.points)

    def xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points])

    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    @property
    def end(self) -> np.ndarray:
        return np.array([self.points[-1].x, self.points[-1].y])

    @property
    def horizon(self) -> float:
        return self.points[-1].t

    def is_canonical(self) -> bool:
        return len(self.points) == CANONICAL_POINTS and abs(self.dt - CANONICAL_DT) < 1e-9

    @classmethod
    def from_xy(cls, xy, dt: float) -> "Trajectory":
        xy = np.asarray(xy, dtype=float)
        pts = tuple(Waypoint(float(x), float(y), dt * (i + 1)) for i, (x, y) in enumerate(xy))
        return cls(pts, dt)

    def to_json(self) -> str:
        return json.dumps(
            {"dt": self.dt, "points": [[p.x, p.y, p.t] for p in self.points]}
        )

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        data = json.loads(text)
        pts = tuple(Waypoint(float(x), float(y), float(t)) for x, y, t in data["points"])
        return cls(pts, float(data["dt"]))


@dataclass(frozen=True)
class EgoStatus:
    """Ego vehicle state at t = 0: pose, speed and longitudinal acceleration."""

    position: tuple[float, float]
    yaw: float
    speed: float
    accel: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"ego speed must be >= 0, got {self.speed}")
        object.__setattr__(self, "yaw", float(wrap_angle(self.yaw)))
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class BicycleState:
    """Kinematic bicycle state (rear-axle reference point)."""

    p_x: float
    p_y: float
    theta: float
    v: float
    a_t: float = 0.0
    a_n: float = 0.0
    phi: float = 0.0
    kappa: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.p_x, self.p_y])

    def as_ego_status(self) -> EgoStatus:
        return EgoStatus((self.p_x, self.p_y), self.theta, max(0.0, self.v), self.a_t)

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.p_x, self.p_y, self.theta, self.v, self.a_t, self.a_n, self.phi, self.kappa]
        )

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "BicycleState":
        return cls(*(float(x) for x in a))


@dataclass(frozen=True)
class KinematicProfile:
    """Per-waypoint kinematic quantities derived from a trajectory.

    Arrays are aligned with the trajectory points (length N). The t = 0
    anchors used by the difference stencils are kept as scalars: `v0` and
    `a_t0` come from the ego status, `yaw0` is the ego heading. Rate
    channels without an ego anchor (phi_rate, j_n, kappa_rate) are zero at
    the first point by convention.
    """

    v: np.ndarray
    yaw: np.ndarray
    a_t: np.ndarray
    a_n: np.ndarray
    kappa: np.ndarray
    phi: np.ndarray
    phi_rate: np.ndarray
    j_t: np.ndarray
    j_n: np.ndarray
    kappa_rate: np.ndarray
    v0: float
    yaw0: float
    a_t0: float

    def __len__(self) -> int:
        return len(self.v)

    def channels(self) -> dict[str, np.ndarray]:
        """The six comfort channels, in fixed order."""
        return {
            "a_t": self.a_t,
            "a_n": self.a_n,
            "phi_rate": self.phi_rate,
            "j_t": self.j_t,
            "j_n": self.j_n,
            "kappa_rate": self.kappa_rate,
        }


def derive_kinematics(
    traj: Trajectory,
    ego: EgoStatus,
    wheelbase: float = DEFAULT_WHEELBASE,
    low_speed: float = LOW_SPEED_GUARD,
) -> KinematicProfile:
    """Finite-difference kinematics of a trajectory, anchored at the ego.

    Forward differences over the stencil [ego, p_1, ..., p_N]: speed from
    displacement magnitudes, yaw from displacement headings (holding the
    previous heading through zero-length segments), a_t = dv/dt,
    kappa = dtheta / (v dt) with a low-speed guard, a_n = v^2 kappa,
    phi = atan(kappa * wheelbase), then one further difference for the
    jerk/rate channels.
    """
    if len(traj) < 2:
        raise TooFewPoints("kinematic derivation needs at least 2 waypoints")
    if wheelbase <= 0:
        raise ValueError(f"wheelbase must be positive, got {wheelbase}")
    dt = traj.dt
    n = len(traj)

    pos = np.vstack([np.asarray(ego.position, dtype=float), traj.xy()])
    disp = np.diff(pos, axis=0)
    dist = np.linalg.norm(disp, axis=1)
    v = dist / dt

    yaw = np.empty(n)
    prev = ego.yaw
    for i in range(n):
        if dist[i] > 1e-9:
            prev = float(np.arctan2(disp[i, 1], disp[i, 0]))
        yaw[i] = prev

    a_t = np.diff(np.concatenate([[ego.speed], v])) / dt

    dtheta = wrap_angle(np.diff(np.concatenate([[ego.yaw], yaw])))
    kappa = np.zeros(n)
    moving = v >= low_speed
    kappa[moving] = dtheta[moving] / (v[moving] * dt)
    a_n = v**2 * kappa
    phi = np.arctan(kappa * wheelbase)

    j_t = np.diff(np.concatenate([[ego.accel], a_t])) / dt
    # no ego anchor exists for these channels; first rate is 0 by convention
    j_n = np.diff(a_n, prepend=a_n[0]) / dt
    phi_rate = np.diff(phi, prepend=phi[0]) / dt
    kappa_rate = np.diff(kappa, prepend=kappa[0]) / dt

    return KinematicProfile(
        v=v,
        yaw=yaw,
        a_t=a_t,
        a_n=a_n,
        kappa=kappa,
        phi=phi,
        phi_rate=phi_rate,
        j_t=j_t,
        j_n=j_n,
        kappa_rate=kappa_rate,
        v0=ego.speed,
        yaw0=ego.yaw,
        a_t0=ego.accel,
    )


def min_obstacle_distance(
    traj: Trajectory,
    scene: "SceneContext",
    ego_radius: float = DEFAULT_EGO_RADIUS,
) -> float:
    """Minimum clearance between the trajectory and all scene obstacles.

    Disc-on-disc clearance: center distance minus both radii, so negative
    values mean penetration. Moving obstacles are extrapolated at constant
    velocity to each waypoint's timestamp. Returns NO_OBSTACLE_DISTANCE for
    an empty scene.
    """
    if not scene.obstacles:
        return NO_OBSTACLE_DISTANCE
    pts = traj.xy()
    ts = traj.times()
    best = np.inf
    for obs in scene.obstacles:
        centers = np.asarray(obs.center, dtype=float)[None, :] + ts[:, None] * np.asarray(
            obs.velocity, dtype=float
        )[None, :]
        d = np.linalg.norm(pts - centers, axis=1) - ego_radius - obs.radius
        best = min(best, float(np.min(d)))
    return best
