"""Noise-prediction training loop and checkpoint container.

Standard denoising objective: draw a step k and Gaussian noise per sample,
corrupt the (whitened) target trajectory through the forward marginal, and
regress the injected noise with an MSE loss. Optimized with Adam; batch
order, noise draws and parameter updates all derive from one seeded
generator, so training is exactly reproducible.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..scene import ConditionConfig
from ..trajectory import NonCanonicalTrajectory, Trajectory
from .denoiser import DenoiserConfig, DenoiserParams, denoiser_backward, denoiser_forward_cached
from .schedule import NoiseSchedule

logger = logging.getLogger(__name__)

POSITION_SCALE = 20.0  # m, fixed condition whitening
SPEED_SCALE = 15.0  # m/s

CHECKPOINT_VERSION = 1


class EmptyDataset(ValueError):
    pass


class UntrainedCheckpoint(RuntimeError):
    """Checkpoint lacks normalization statistics (was never trained)."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1.5e-3
    lr_final_frac: float = 0.1  # cosine decay floor as a fraction of lr
    seed: int = 0
    n_steps: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.06
    hidden: int = 96
    n_blocks: int = 3
    kernel: int = 3
    time_emb_dim: int = 32
    film_hidden: int = 192
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def lr_at(self, epoch: int) -> float:
        if self.epochs <= 1:
            return self.lr
        frac = 0.5 * (1.0 + np.cos(np.pi * epoch / (self.epochs - 1)))
        lo = self.lr * self.lr_final_frac
        return lo + (self.lr - lo) * frac

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class Adam:
    """Adam with a fixed (sorted-key) update order for reproducibility."""

    def __init__(self, params: DenoiserParams, config: TrainConfig):
        self.b1 = config.adam_beta1
        self.b2 = config.adam_beta2
        self.eps = config.adam_eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def step(self, params: DenoiserParams, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name in sorted(params.tensors):
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params.tensors[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class PlannerCheckpoint:
    params: DenoiserParams
    schedule: NoiseSchedule
    cond_config: ConditionConfig
    norm_mean: np.ndarray | None  # [T, P]
    norm_std: np.ndarray | None  # [T, P], strictly positive
    meta: dict = field(default_factory=dict)

    def require_trained(self) -> None:
        if self.norm_mean is None or self.norm_std is None:
            raise UntrainedCheckpoint("checkpoint has no normalization statistics")
        if np.any(np.asarray(self.norm_std) <= 0):
            raise UntrainedCheckpoint("normalization std must be positive")

    def save(self, path) -> None:
        header = {
            "version": CHECKPOINT_VERSION,
            "denoiser": self.params.config.to_dict(),
            "schedule": self.schedule.to_dict(),
            "cond_config": self.cond_config.to_dict(),
            "meta": self.meta,
            "trained": self.norm_mean is not None,
        }
        arrays = {f"param_{k}": v for k, v in self.params.tensors.items()}
        if self.norm_mean is not None:
            arrays["norm_mean"] = self.norm_mean
            arrays["norm_std"] = self.norm_std
        np.savez(path, header=json.dumps(header), **arrays)

    @classmethod
    def load(cls, path) -> "PlannerCheckpoint":
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            if header["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {header['version']}")
            config = DenoiserConfig.from_dict(header["denoiser"])
            tensors = {
                k[len("param_") :]: data[k] for k in data.files if k.startswith("param_")
            }
            norm_mean = data["norm_mean"] if "norm_mean" in data.files else None
            norm_std = data["norm_std"] if "norm_std" in data.files else None
        return cls(
            params=DenoiserParams(config, tensors),
            schedule=NoiseSchedule.from_dict(header["schedule"]),
            cond_config=ConditionConfig.from_dict(header["cond_config"]),
            norm_mean=norm_mean,
            norm_std=norm_std,
            meta=header.get("meta", {}),
        )


def _as_arrays(dataset, cond_config: ConditionConfig):
    """Accept [(condition, Trajectory)] pairs or pre-stacked arrays."""
    if isinstance(dataset, tuple) and len(dataset) == 2:
        conds, labels = dataset
        return np.asarray(conds, dtype=float), np.asarray(labels, dtype=float)
    conds, labels = [], []
    for cond, traj in dataset:
        if isinstance(traj, Trajectory):
            if not traj.is_canonical():
                raise NonCanonicalTrajectory("training labels must be canonical trajectories")
            labels.append(traj.xy())
        else:
            labels.append(np.asarray(traj, dtype=float))
        conds.append(np.asarray(cond, dtype=float))
    return np.asarray(conds), np.asarray(labels)


def loss_and_grads(
    params: DenoiserParams,
    x_noisy: np.ndarray,
    k: np.ndarray,
    cond: np.ndarray,
    eps: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-squared noise-prediction error and parameter gradients."""
    eps_hat, cache = denoiser_forward_cached(params, x_noisy, k, cond)
    diff = eps_hat - eps
    loss = float(np.mean(diff**2))
    grads = denoiser_backward(params, cache, 2.0 * diff / diff.size)
    return loss, grads


def train(
    dataset,
    config: TrainConfig = TrainConfig(),
    cond_config: ConditionConfig = ConditionConfig(),
) -> PlannerCheckpoint:
    """Train a planner checkpoint on (condition, ego-frame trajectory) pairs.

    Labels are standardized per output coordinate (each of the T x 2 cells
    gets its own mean/std from the training set); conditions are whitened
    by fixed per-kind scales. The returned checkpoint carries everything
    sampling needs: parameters, schedule, layout and statistics.
    """
    conds, labels = _as_arrays(dataset, cond_config)
    if len(conds) == 0:
        raise EmptyDataset("training needs at least one sample")
    if labels.shape[1:] != (cond_config.horizon, 2):
        raise NonCanonicalTrajectory(
            f"labels must have shape [*, {cond_config.horizon}, 2], got {labels.shape}"
        )
    if conds.shape[1] != cond_config.dim:
        raise ValueError(f"condition dim {conds.shape[1]} != layout dim {cond_config.dim}")

    mean = labels.mean(axis=0)
    std = np.maximum(labels.std(axis=0), 1e-6)
    y = (labels - mean) / std

    sched = NoiseSchedule.linear(config.n_steps, config.beta_start, config.beta_end)
    denoiser_config = DenoiserConfig(
        cond_dim=cond_config.dim,
        hidden=config.hidden,
        n_blocks=config.n_blocks,
        kernel=config.kernel,
        time_emb_dim=config.time_emb_dim,
        film_hidden=config.film_hidden,
        horizon=cond_config.horizon,
        cond_scales=cond_config.scale_vector(POSITION_SCALE, SPEED_SCALE),
    )
    rng = np.random.default_rng([config.seed, 0xD1FF])
    params = DenoiserParams.init(denoiser_config, rng)
    opt = Adam(params, config)

    n = len(y)
    loss_curve = []
    t_start = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        lr = config.lr_at(epoch)
        losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            yb, cb = y[idx], conds[idx]
            k = rng.integers(0, sched.n_steps, size=len(idx))
            eps = rng.standard_normal(yb.shape)
            ab = sched.alpha_bar[k][:, None, None]
            x_noisy = np.sqrt(ab) * yb + np.sqrt(1.0 - ab) * eps
            loss, grads = loss_and_grads(params, x_noisy, k, cb, eps)
            opt.step(params, grads, lr)
            losses.append(loss)
        loss_curve.append(float(np.mean(losses)))
        logger.info("epoch %d/%d  loss %.5f", epoch + 1, config.epochs, loss_curve[-1])

    meta = {
        "train_config": config.to_dict(),
        "n_samples": int(n),
        "loss_curve": loss_curve,
        "train_seconds": time.perf_counter() - t_start,
    }
    return PlannerCheckpoint(
        params=params,
        schedule=sched,
        cond_config=cond_config,
        norm_mean=mean,
        norm_std=std,
        meta=meta,
    )
