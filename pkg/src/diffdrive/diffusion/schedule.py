"""Variance schedule and the forward (noising) process.

Step indices run k = 0 .. K-1 from least to most noisy; k = -1 is the
noise-free boundary (alpha_bar = 1). The default linear schedule is sized
so that the terminal signal fraction alpha_bar[K-1] drops below 0.05,
keeping the terminal marginal close to a standard Gaussian at K = 100.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_STEPS = 100
DEFAULT_BETA_START = 1e-3
DEFAULT_BETA_END = 0.06
TERMINAL_ALPHA_BAR = 0.05


class ShapeMismatch(ValueError):
    pass


class StepOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size == 0:
            raise ValueError("beta must be a non-empty 1-D array")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("beta entries must lie in (0, 1)")
        if np.any(np.diff(beta) < 0):
            raise ValueError("beta must be non-decreasing")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        if np.any(np.diff(alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if alpha_bar[-1] >= TERMINAL_ALPHA_BAR:
            raise ValueError(
                f"terminal alpha_bar {alpha_bar[-1]:.4f} must be < {TERMINAL_ALPHA_BAR}; "
                "increase K or the beta range"
            )
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def n_steps(self) -> int:
        return len(self.beta)

    @classmethod
    def linear(
        cls,
        n_steps: int = DEFAULT_STEPS,
        beta_start: float = DEFAULT_BETA_START,
        beta_end: float = DEFAULT_BETA_END,
    ) -> "NoiseSchedule":
        return cls(np.linspace(beta_start, beta_end, n_steps))

    def check_step(self, k: int, allow_boundary: bool = False) -> None:
        lo = -1 if allow_boundary else 0
        if not (lo <= k < self.n_steps):
            raise StepOutOfRange(f"step {k} outside [{lo}, {self.n_steps})")

    def alpha_bar_at(self, k: int) -> float:
        """alpha_bar with the k = -1 identity boundary."""
        self.check_step(k, allow_boundary=True)
        return 1.0 if k == -1 else float(self.alpha_bar[k])

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "beta_start": float(self.beta[0]),
            "beta_end": float(self.beta[-1]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return cls.linear(int(d["n_steps"]), float(d["beta_start"]), float(d["beta_end"]))


def forward_noise(clean: np.ndarray, k: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Sample the forward marginal: sqrt(ab_k) * clean + sqrt(1 - ab_k) * eps."""
    clean = np.asarray(clean, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if clean.shape != eps.shape:
        raise ShapeMismatch(f"clean {clean.shape} vs eps {eps.shape}")
    ab = sched.alpha_bar_at(k)
    return np.sqrt(ab) * clean + np.sqrt(1.0 - ab) * eps


def predict_clean(noisy: np.ndarray, k: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Invert the forward marginal for a known (or predicted) eps."""
    noisy = np.asarray(noisy, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if noisy.shape != eps.shape:
        raise ShapeMismatch(f"noisy {noisy.shape} vs eps {eps.shape}")
    ab = sched.alpha_bar_at(k)
    return (noisy - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
