"""Reverse-process samplers: ancestral (stochastic) and strided
deterministic sampling with the same trained noise predictor.

Both samplers operate on tensors of shape [B, N_a, T, P]: N_a candidate
trajectories per scene, each refined from its own initial Gaussian draw.
Anchors share network weights, so multi-modality comes purely from the
independent noise. Outputs are de-normalized with the checkpoint's
statistics when provided.
"""

from __future__ import annotations

import numpy as np

from .denoiser import DenoiserParams, denoiser_forward
from .schedule import NoiseSchedule, ShapeMismatch, predict_clean


class StepsOutOfRange(ValueError):
    pass


# samplers work in whitened space where valid states live within a few sigma;
# clamping the running state keeps arbitrary (e.g. untrained) parameters from
# propagating overflows into NaN
STATE_CLAMP = 20.0


def _flatten_batch(x: np.ndarray, cond: np.ndarray, cond_dim: int):
    if x.ndim != 4:
        raise ShapeMismatch(f"expected [B, N_a, T, P], got {x.shape}")
    b, n_a, t, p = x.shape
    cond = np.asarray(cond, dtype=float)
    if cond.ndim == 1:
        cond = cond[None, :]
    if cond.shape != (b, cond_dim):
        raise ShapeMismatch(f"expected condition [{b}, {cond_dim}], got {cond.shape}")
    cond_rep = np.repeat(cond, n_a, axis=0)
    return x.reshape(b * n_a, t, p), cond_rep, (b, n_a, t, p)


def denoise_step(
    noisy: np.ndarray,
    k: int,
    cond: np.ndarray,
    params: DenoiserParams,
    sched: NoiseSchedule,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One ancestral reverse step.

    x_{k-1} = (x_k - gamma_k * eps_hat) / sqrt(alpha_k) + sigma_k * z with
    gamma_k = beta_k / sqrt(1 - alpha_bar_k) and sigma_k^2 = beta_k; the
    stochastic term is only added for k > 0.
    """
    sched.check_step(k)
    noisy = np.asarray(noisy, dtype=float)
    flat, cond_rep, shape = _flatten_batch(noisy, cond, params.config.cond_dim)
    eps_hat = denoiser_forward(params, flat, k, cond_rep).reshape(shape)

    gamma = sched.beta[k] / np.sqrt(1.0 - sched.alpha_bar[k])
    mean = (noisy - gamma * eps_hat) / np.sqrt(sched.alpha[k])
    if k > 0:
        if rng is None:
            raise ValueError("an rng is required for stochastic steps (k > 0)")
        mean = mean + np.sqrt(sched.beta[k]) * rng.standard_normal(noisy.shape)
    return mean


def _denormalize(x, norm_mean, norm_std):
    if norm_mean is None or norm_std is None:
        return x
    return x * np.asarray(norm_std)[None, None, :, :] + np.asarray(norm_mean)[None, None, :, :]


def sample_ddpm(
    cond: np.ndarray,
    n_anchors: int,
    params: DenoiserParams,
    sched: NoiseSchedule,
    seed: int = 0,
    *,
    norm_mean: np.ndarray | None = None,
    norm_std: np.ndarray | None = None,
) -> np.ndarray:
    """Full-length ancestral sampling from pure noise; deterministic per seed.

    `cond` may be a single condition vector (B = 1) or a [B, D] batch.
    Returns [B, n_anchors, T, P].
    """
    if n_anchors < 1:
        raise ValueError("n_anchors must be >= 1")
    cfg = params.config
    cond_arr = np.asarray(cond, dtype=float)
    b = 1 if cond_arr.ndim == 1 else cond_arr.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((b, n_anchors, cfg.horizon, cfg.in_channels))
    for k in range(sched.n_steps - 1, -1, -1):
        x = denoise_step(x, k, cond_arr, params, sched, rng)
        x = np.clip(np.nan_to_num(x, nan=0.0), -STATE_CLAMP, STATE_CLAMP)
    return _denormalize(x, norm_mean, norm_std)


def ddim_step_indices(n_steps: int, n_infer_steps: int) -> np.ndarray:
    """Evenly strided descending subset of step indices, always containing
    the terminal step; the last transition targets the k = -1 boundary."""
    if not (1 <= n_infer_steps <= n_steps):
        raise StepsOutOfRange(f"n_infer_steps must be in [1, {n_steps}], got {n_infer_steps}")
    taus = np.round(np.linspace(n_steps - 1, 0, n_infer_steps)).astype(int)
    return np.unique(taus)[::-1]


def sample_ddim(
    cond: np.ndarray,
    n_anchors: int,
    params: DenoiserParams,
    sched: NoiseSchedule,
    n_infer_steps: int,
    seed: int = 0,
    *,
    norm_mean: np.ndarray | None = None,
    norm_std: np.ndarray | None = None,
) -> np.ndarray:
    """Deterministic strided sampling (eta = 0).

    Each update predicts the clean sample from the current noise estimate
    and re-noises it to the previous retained step, so training-time step
    count and inference-time step count are decoupled.
    """
    if n_anchors < 1:
        raise ValueError("n_anchors must be >= 1")
    cfg = params.config
    cond_arr = np.asarray(cond, dtype=float)
    b = 1 if cond_arr.ndim == 1 else cond_arr.shape[0]
    taus = ddim_step_indices(sched.n_steps, n_infer_steps)

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((b, n_anchors, cfg.horizon, cfg.in_channels))
    for i, k in enumerate(taus):
        k_prev = int(taus[i + 1]) if i + 1 < len(taus) else -1
        flat, cond_rep, shape = _flatten_batch(x, cond_arr, cfg.cond_dim)
        eps_hat = denoiser_forward(params, flat, int(k), cond_rep).reshape(shape)
        x0 = predict_clean(x, int(k), eps_hat, sched)
        ab_prev = sched.alpha_bar_at(k_prev)
        x = np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps_hat
        x = np.clip(np.nan_to_num(x, nan=0.0), -STATE_CLAMP, STATE_CLAMP)
    return _denormalize(x, norm_mean, norm_std)
