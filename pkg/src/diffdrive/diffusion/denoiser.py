"""Noise-prediction network: a FiLM-conditioned temporal residual stack.

The network maps a noisy trajectory tensor [B, T, 2] plus a diffusion step
and a condition vector to a noise estimate of the same shape. Each of the
L residual blocks is a same-resolution 1-D convolution over the T axis
whose activations are modulated per-channel by FiLM (scale 1 + gamma_b,
shift beta_b) computed from the condition and a sinusoidal step embedding
through a shared two-layer projection. At T = 6 there is nothing to
down/upsample, so the stack stays at full resolution.

Implemented directly in numpy (forward and backward) so training is
bitwise reproducible and the analytic gradients can be checked against
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


# whitened conditions are clipped here before entering the FiLM projection;
# far-out-of-distribution scenes must not blow up the modulation scales
COND_CLIP = 6.0


@dataclass(frozen=True)
class DenoiserConfig:
    cond_dim: int
    hidden: int = 64
    n_blocks: int = 3
    kernel: int = 3
    time_emb_dim: int = 32
    film_hidden: int = 128
    in_channels: int = 2
    horizon: int = 6
    cond_scales: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise ValueError("kernel must be odd for same-padding")
        if self.time_emb_dim % 2 != 0:
            raise ValueError("time_emb_dim must be even")
        scales = self.cond_scales
        if scales is None:
            scales = np.ones(self.cond_dim)
        scales = np.asarray(scales, dtype=float)
        if scales.shape != (self.cond_dim,) or np.any(scales <= 0):
            raise ValueError("cond_scales must be positive with shape (cond_dim,)")
        object.__setattr__(self, "cond_scales", scales)

    @property
    def film_out_dim(self) -> int:
        return self.n_blocks * 2 * self.hidden

    def to_dict(self) -> dict:
        return {
            "cond_dim": self.cond_dim,
            "hidden": self.hidden,
            "n_blocks": self.n_blocks,
            "kernel": self.kernel,
            "time_emb_dim": self.time_emb_dim,
            "film_hidden": self.film_hidden,
            "in_channels": self.in_channels,
            "horizon": self.horizon,
            "cond_scales": self.cond_scales.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["cond_scales"] = np.asarray(d["cond_scales"], dtype=float)
        return cls(**d)


class DenoiserParams:
    """Named parameter tensors plus their configuration."""

    def __init__(self, config: DenoiserConfig, tensors: dict[str, np.ndarray]):
        self.config = config
        self.tensors = tensors

    @classmethod
    def init(
        cls, config: DenoiserConfig, rng: np.random.Generator, film_zero_init: bool = True
    ) -> "DenoiserParams":
        """He-initialized convs; the FiLM output layer starts at zero so the
        network initially ignores its conditioning (modulation = identity)."""
        h, k, c = config.hidden, config.kernel, config.in_channels
        z_dim = config.cond_dim + config.time_emb_dim

        def he(fan_in, shape):
            return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

        tensors: dict[str, np.ndarray] = {
            "stem_w": he(k * c, (k * c, h)),
            "stem_b": np.zeros(h),
            "head_w": he(k * h, (k * h, c)) * 0.1,
            "head_b": np.zeros(c),
            "film_w1": he(z_dim, (z_dim, config.film_hidden)),
            "film_b1": np.zeros(config.film_hidden),
            "film_b2": np.zeros(config.film_out_dim),
        }
        if film_zero_init:
            tensors["film_w2"] = np.zeros((config.film_hidden, config.film_out_dim))
        else:
            tensors["film_w2"] = he(config.film_hidden, (config.film_hidden, config.film_out_dim))
        for b in range(config.n_blocks):
            tensors[f"block{b}_w"] = he(k * h, (k * h, h))
            tensors[f"block{b}_b"] = np.zeros(h)
        return cls(config, tensors)

    @property
    def group_names(self) -> list[str]:
        return sorted(self.tensors)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())


def time_embedding(k, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer diffusion steps, shape [B, dim]."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    half = dim // 2
    inv_freq = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = k[:, None] * inv_freq[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    b, t, c = x.shape
    pad = (kernel - 1) // 2
    xp = np.zeros((b, t + kernel - 1, c))
    xp[:, pad : pad + t] = x
    cols = np.empty((b, t, kernel * c))
    for j in range(kernel):
        cols[:, :, j * c : (j + 1) * c] = xp[:, j : j + t]
    return cols


def _col2im(dcols: np.ndarray, kernel: int, t: int, c: int) -> np.ndarray:
    b = dcols.shape[0]
    pad = (kernel - 1) // 2
    dxp = np.zeros((b, t + kernel - 1, c))
    for j in range(kernel):
        dxp[:, j : j + t] += dcols[:, :, j * c : (j + 1) * c]
    return dxp[:, pad : pad + t]


def _conv_forward(x, w, b, kernel):
    cols = _im2col(x, kernel)
    return cols @ w + b, cols


def _conv_backward(cols, w, d_out, kernel, c_in):
    b_sz, t, _ = d_out.shape
    dw = cols.reshape(-1, cols.shape[-1]).T @ d_out.reshape(-1, d_out.shape[-1])
    db = d_out.sum(axis=(0, 1))
    dx = _col2im(d_out @ w.T, kernel, t, c_in)
    return dw, db, dx


def _prepare_inputs(params: DenoiserParams, x, k, cond):
    cfg = params.config
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != cfg.horizon or x.shape[2] != cfg.in_channels:
        raise ValueError(f"expected input [B, {cfg.horizon}, {cfg.in_channels}], got {x.shape}")
    b = x.shape[0]
    cond = np.asarray(cond, dtype=float)
    if cond.ndim == 1:
        cond = np.broadcast_to(cond, (b, cond.shape[0]))
    if cond.shape != (b, cfg.cond_dim):
        raise ValueError(f"expected condition [B, {cfg.cond_dim}], got {cond.shape}")
    k = np.broadcast_to(np.atleast_1d(np.asarray(k, dtype=float)), (b,))
    cond_scaled = np.clip(cond / cfg.cond_scales[None, :], -COND_CLIP, COND_CLIP)
    return x, k, cond_scaled, squeeze


def denoiser_forward_cached(params: DenoiserParams, x, k, cond):
    """Forward pass keeping every intermediate needed for backprop."""
    cfg = params.config
    p = params.tensors
    x, k, cond_scaled, squeeze = _prepare_inputs(params, x, k, cond)

    z = np.concatenate([cond_scaled, time_embedding(k, cfg.time_emb_dim)], axis=1)
    f_pre = z @ p["film_w1"] + p["film_b1"]
    f = np.maximum(f_pre, 0.0)
    film = f @ p["film_w2"] + p["film_b2"]

    h, stem_cols = _conv_forward(x, p["stem_w"], p["stem_b"], cfg.kernel)
    blocks = []
    for bi in range(cfg.n_blocks):
        u, cols = _conv_forward(h, p[f"block{bi}_w"], p[f"block{bi}_b"], cfg.kernel)
        s = bi * 2 * cfg.hidden
        gamma = 1.0 + film[:, s : s + cfg.hidden]
        beta = film[:, s + cfg.hidden : s + 2 * cfg.hidden]
        m = gamma[:, None, :] * u + beta[:, None, :]
        r = np.maximum(m, 0.0)
        blocks.append({"h_in": h, "cols": cols, "u": u, "gamma": gamma, "mask": m > 0})
        h = h + r
    out, head_cols = _conv_forward(h, p["head_w"], p["head_b"], cfg.kernel)

    cache = {
        "z": z,
        "f_pre": f_pre,
        "f": f,
        "stem_cols": stem_cols,
        "blocks": blocks,
        "head_cols": head_cols,
        "squeeze": squeeze,
    }
    return (out[0] if squeeze else out), cache


def denoiser_forward(params: DenoiserParams, x, k, cond) -> np.ndarray:
    out, _ = denoiser_forward_cached(params, x, k, cond)
    return out


def denoiser_backward(params: DenoiserParams, cache, d_out) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter tensor, given
    d(loss)/d(output)."""
    cfg = params.config
    p = params.tensors
    d_out = np.asarray(d_out, dtype=float)
    if cache["squeeze"] and d_out.ndim == 2:
        d_out = d_out[None]

    grads: dict[str, np.ndarray] = {}
    grads["head_w"], grads["head_b"], dh = _conv_backward(
        cache["head_cols"], p["head_w"], d_out, cfg.kernel, cfg.hidden
    )

    b_sz = d_out.shape[0]
    d_film = np.zeros((b_sz, cfg.film_out_dim))
    for bi in reversed(range(cfg.n_blocks)):
        blk = cache["blocks"][bi]
        dm = dh * blk["mask"]  # residual: dh flows to both r and h_in
        s = bi * 2 * cfg.hidden
        d_film[:, s : s + cfg.hidden] += np.sum(dm * blk["u"], axis=1)
        d_film[:, s + cfg.hidden : s + 2 * cfg.hidden] += np.sum(dm, axis=1)
        du = dm * blk["gamma"][:, None, :]
        dw, db, dh_conv = _conv_backward(blk["cols"], p[f"block{bi}_w"], du, cfg.kernel, cfg.hidden)
        grads[f"block{bi}_w"] = dw
        grads[f"block{bi}_b"] = db
        dh = dh + dh_conv

    grads["stem_w"] = cache["stem_cols"].reshape(-1, cache["stem_cols"].shape[-1]).T @ dh.reshape(
        -1, cfg.hidden
    )
    grads["stem_b"] = dh.sum(axis=(0, 1))

    grads["film_w2"] = cache["f"].T @ d_film
    grads["film_b2"] = d_film.sum(axis=0)
    df = (d_film @ p["film_w2"].T) * (cache["f_pre"] > 0)
    grads["film_w1"] = cache["z"].T @ df
    grads["film_b1"] = df.sum(axis=0)
    return grads
