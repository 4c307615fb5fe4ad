"""Kinematic comfort metric between a predicted and a reference trajectory.

For nested horizons of 1, 2 and 3 seconds, integrate the weighted absolute
deviation of six channels (longitudinal/lateral acceleration, steering
rate, longitudinal/lateral jerk, curvature rate) between the two profiles,
then map the raw index C through exp(-alpha * C) to a 0..100 percentage
where a perfect match scores 100.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import (
    DEFAULT_WHEELBASE,
    EgoStatus,
    NonCanonicalTrajectory,
    Trajectory,
    derive_kinematics,
)

DEFAULT_ALPHA = 0.05
HORIZONS_S = (1.0, 2.0, 3.0)

CHANNELS = ("a_t", "a_n", "phi_rate", "j_t", "j_n", "kappa_rate")


class NonPositiveDuration(ValueError):
    pass


class HorizonMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ComfortWeights:
    """w1..w6 for |da_t|, |da_n|, |dphi_rate|, |dj_t|, |dj_n|, |dkappa_rate|."""

    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    w4: float = 1.0
    w5: float = 1.0
    w6: float = 1.0

    def __post_init__(self):
        if any(w < 0 for w in self.as_array()):
            raise ValueError("comfort weights must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.w3, self.w4, self.w5, self.w6])

    @classmethod
    def from_dict(cls, d: dict) -> "ComfortWeights":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class HorizonComfort:
    horizon_s: float
    c: float
    c_n: float
    c_p: float


@dataclass(frozen=True)
class ComfortReport:
    horizons: tuple[HorizonComfort, ...]
    total: HorizonComfort  # horizon_s is the full duration; c sums the horizons
    alpha: float

    def per_horizon(self, horizon_s: float) -> HorizonComfort:
        for h in self.horizons:
            if abs(h.horizon_s - horizon_s) < 1e-9:
                return h
        raise KeyError(f"no horizon {horizon_s}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "horizons": [
                {"horizon_s": h.horizon_s, "C": h.c, "C_n": h.c_n, "C_p": h.c_p}
                for h in self.horizons
            ],
            "total": {
                "horizon_s": self.total.horizon_s,
                "C": self.total.c,
                "C_n": self.total.c_n,
                "C_p": self.total.c_p,
            },
        }

    def to_csv(self) -> str:
        lines = ["horizon,C,C_n,C_p"]
        for h in self.horizons:
            lines.append(f"{h.horizon_s:g}s,{h.c!r},{h.c_n!r},{h.c_p!r}")
        lines.append(f"total,{self.total.c!r},{self.total.c_n!r},{self.total.c_p!r}")
        return "\n".join(lines) + "\n"


def segment_timeline(durations) -> np.ndarray:
    """Start timestamps of consecutive segments (prefix sums, first = 0)."""
    durations = np.asarray(durations, dtype=float)
    if durations.size == 0 or np.any(durations <= 0):
        raise NonPositiveDuration("segment durations must be positive")
    return np.concatenate([[0.0], np.cumsum(durations)[:-1]])


def _normalized(c: float, alpha: float) -> tuple[float, float]:
    c_n = float(np.exp(-alpha * c))
    return c_n, 100.0 * c_n


def comfort_index(
    pred: Trajectory,
    truth: Trajectory,
    ego: EgoStatus,
    weights: ComfortWeights = ComfortWeights(),
    alpha: float = DEFAULT_ALPHA,
    *,
    wheelbase: float = DEFAULT_WHEELBASE,
    horizons=HORIZONS_S,
) -> ComfortReport:
    """Comfort report for a predicted trajectory against a reference one.

    Both trajectories must share the canonical grid and start from the same
    ego state. Each horizon integrates (trapezoidal rule over the sampled
    grid, truncated to available samples) the weighted channel deviations;
    the total row sums the per-horizon indices.
    """
    if abs(pred.dt - truth.dt) > 1e-9 or len(pred) != len(truth):
        raise HorizonMismatch("pred and truth must share dt and point count")
    if not (pred.is_canonical() and truth.is_canonical()):
        raise NonCanonicalTrajectory("comfort metric expects 6 points at 0.5 s spacing")

    prof_p = derive_kinematics(pred, ego, wheelbase)
    prof_t = derive_kinematics(truth, ego, wheelbase)
    w = weights.as_array()
    chan_p = prof_p.channels()
    chan_t = prof_t.channels()
    # weighted sum of |channel deviations| at each sampled time
    integrand = np.zeros(len(pred))
    for wi, name in zip(w, CHANNELS):
        integrand += wi * np.abs(chan_p[name] - chan_t[name])
    times = pred.times()

    rows = []
    total_c = 0.0
    for t_k in horizons:
        m = int(np.sum(times <= t_k + 1e-9))
        c_k = float(np.trapz(integrand[:m], dx=pred.dt)) if m >= 2 else 0.0
        c_n, c_p = _normalized(c_k, alpha)
        rows.append(HorizonComfort(float(t_k), c_k, c_n, c_p))
        total_c += c_k
    c_n, c_p = _normalized(total_c, alpha)
    total = HorizonComfort(float(times[-1]), total_c, c_n, c_p)
    return ComfortReport(tuple(rows), total, alpha)
