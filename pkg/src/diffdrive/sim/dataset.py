"""Imitation dataset: (condition, expert future) pairs from scenario rollouts.

Every scenario contributes one pair per tick: the condition vector seen at
that tick (with expert futures standing in for the plan history) and the
expert's next 3 seconds expressed in that tick's ego frame. The on-disk
format is a JSON header describing the layout followed by length-prefixed
float32 records, so files are self-describing and hash-stable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..geometry import to_local
from ..scene import ConditionConfig, HistoryBuffer, HistoryEntry, encode_condition
from ..trajectory import BicycleState, DEFAULT_WHEELBASE, Trajectory, derive_kinematics
from .bicycle import SimParams
from .scenarios import ALL_KINDS, Scenario, generate_scenario

MAGIC = b"DDRV-DS1"
SCENARIO_SEED_STRIDE = 1_000_003  # scenario i of base seed s draws from s * stride + i


class EmptyDataset(ValueError):
    pass


# expert histories predict the label almost perfectly, so without corruption
# the model learns to extrapolate its history and ignores goal and obstacles;
# in closed loop that turns into an echo chamber of its own past plans
HISTORY_DROPOUT = 0.35
HISTORY_JITTER = 0.12  # m per sqrt(step), mimics self-generated plan noise


def _corrupt_history(
    history: HistoryBuffer,
    cond_config: ConditionConfig,
    rng: np.random.Generator,
) -> HistoryBuffer:
    """Drop or jitter entries so history is informative but never exact."""
    out = HistoryBuffer(cond_config.history_len)
    growth = np.sqrt(np.arange(1, cond_config.horizon + 1))[:, None]
    for entry in history.entries:
        if rng.random() < HISTORY_DROPOUT:
            continue
        noisy_xy = entry.trajectory.xy() + HISTORY_JITTER * growth * rng.standard_normal(
            (cond_config.horizon, 2)
        )
        out.push(
            HistoryEntry(
                trajectory=Trajectory.from_xy(noisy_xy, entry.trajectory.dt),
                v=entry.v + 0.15 * rng.standard_normal(entry.v.shape),
                a=entry.a + 0.25 * rng.standard_normal(entry.a.shape),
                yaw=entry.yaw + 0.05 * rng.standard_normal(entry.yaw.shape),
                sim_time=entry.sim_time,
            )
        )
    return out


def _pairs_from_states(
    states,
    scenario: Scenario,
    cond_config: ConditionConfig,
    wheelbase: float,
    drop_rng: np.random.Generator | None = None,
    start_tick: int = 0,
) -> list[tuple[np.ndarray, Trajectory]]:
    """Per-tick (condition, ego-frame future) pairs along a state rollout."""
    pairs = []
    history = HistoryBuffer(cond_config.history_len)
    horizon = scenario.horizon
    for tick in range(len(states) - horizon - 1):
        t = (start_tick + tick) * scenario.dt
        ego = states[tick].as_ego_status()
        scene_t = scenario.scene_at(t)
        encoded_history = (
            _corrupt_history(history, cond_config, drop_rng) if drop_rng is not None else history
        )
        cond = encode_condition(scene_t, ego, encoded_history, cond_config)
        future_xy = np.array([states[tick + 1 + i].position for i in range(horizon)])
        future_world = Trajectory.from_xy(future_xy, scenario.dt)
        label_xy = to_local(future_xy, ego.position, ego.yaw)
        pairs.append((cond, Trajectory.from_xy(label_xy, scenario.dt)))
        profile = derive_kinematics(future_world, ego, wheelbase)
        history.push(
            HistoryEntry(future_world, profile.v, profile.a_t, profile.yaw, sim_time=t)
        )
    return pairs


def scenario_pairs(
    scenario: Scenario,
    cond_config: ConditionConfig = ConditionConfig(),
    wheelbase: float = DEFAULT_WHEELBASE,
    drop_rng: np.random.Generator | None = None,
) -> list[tuple[np.ndarray, Trajectory]]:
    """Per-tick (condition, ego-frame expert future) pairs for one scenario."""
    return _pairs_from_states(scenario.expert_states, scenario, cond_config, wheelbase, drop_rng)


def recovery_pairs(
    scenario: Scenario,
    cond_config: ConditionConfig = ConditionConfig(),
    params: SimParams = SimParams(),
    n_rollouts: int = 2,
) -> list[tuple[np.ndarray, Trajectory]]:
    """Corrective demonstrations from perturbed mid-episode states.

    The closed loop visits states the nominal expert never does: wrong speed
    or heading for the current target, lateral offset, mid-turn drift.
    Re-running the scripted controller from a randomly perturbed copy of a
    random expert tick yields labels that demonstrate the way back to
    nominal, which keeps the learned policy from compounding small tracking
    errors. Rollouts that graze an obstacle are dropped rather than retried.
    """
    from .scenarios import _expert_is_clear, _rollout_expert_from  # shared internals

    rng = np.random.default_rng([scenario.seed, 0xEC0])
    pairs: list[tuple[np.ndarray, Trajectory]] = []
    n_total = len(scenario.expert_states) - 1
    for _ in range(n_rollouts):
        k0 = int(rng.integers(0, scenario.n_ticks - scenario.horizon))
        base = scenario.expert_states[k0]
        lateral = rng.uniform(-1.5, 1.5)
        start = BicycleState(
            p_x=base.p_x - lateral * np.sin(base.theta),
            p_y=base.p_y + lateral * np.cos(base.theta),
            theta=base.theta + rng.uniform(-0.2, 0.2),
            v=float(np.clip(base.v * rng.uniform(0.5, 1.4) + rng.uniform(-0.5, 0.5), 0.0, 9.5)),
            a_t=float(rng.uniform(-1.5, 1.5)),
            phi=float(np.clip(base.phi + rng.uniform(-0.1, 0.1), -params.max_steer, params.max_steer)),
            kappa=base.kappa,
        )
        states = _rollout_expert_from(
            start, scenario.scene, scenario.speed_plan, k0, n_total - k0, params
        )
        if _expert_is_clear(states, scenario.scene, params.dt, params.ego_radius, start_tick=k0):
            pairs.extend(
                _pairs_from_states(
                    states, scenario, cond_config, params.wheelbase, rng, start_tick=k0
                )
            )
    return pairs


def build_scenarios(
    n: int,
    seed: int,
    duration: float = 12.0,
    kinds=ALL_KINDS,
    params: SimParams = SimParams(),
) -> list[Scenario]:
    """n scenarios cycling through the kinds, deterministically seeded."""
    if n < 1:
        raise EmptyDataset(f"need at least one scenario, got n={n}")
    return [
        generate_scenario(seed * SCENARIO_SEED_STRIDE + i, kinds[i % len(kinds)],
                          duration=duration, params=params)
        for i in range(n)
    ]


def build_dataset(
    n: int,
    seed: int,
    *,
    duration: float = 12.0,
    kinds=ALL_KINDS,
    cond_config: ConditionConfig = ConditionConfig(),
    params: SimParams = SimParams(),
    recovery_rollouts: int = 1,
    history_dropout: bool = True,
) -> list[tuple[np.ndarray, Trajectory]]:
    """Roll n scenarios and emit deterministically shuffled training pairs.

    Each scenario contributes its nominal expert pairs plus (by default) one
    perturbed-start recovery rollout; see :func:`recovery_pairs`. History
    dropout is on for training data and should be disabled when building
    nominal evaluation conditions.
    """
    pairs: list[tuple[np.ndarray, Trajectory]] = []
    for scenario in build_scenarios(n, seed, duration, kinds, params):
        drop_rng = (
            np.random.default_rng([scenario.seed, 0xD20]) if history_dropout else None
        )
        pairs.extend(scenario_pairs(scenario, cond_config, params.wheelbase, drop_rng))
        if recovery_rollouts:
            pairs.extend(recovery_pairs(scenario, cond_config, params, recovery_rollouts))
    rng = np.random.default_rng([seed, 0xDA7A])
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


def save_dataset_file(pairs, path, cond_config: ConditionConfig, meta: dict | None = None) -> None:
    path = Path(path)
    header = {
        "version": 1,
        "n_records": len(pairs),
        "cond_dim": cond_config.dim,
        "cond_config": cond_config.to_dict(),
        "label_shape": [cond_config.horizon, 2],
        "dtype": "<f4",
        "normalization": {
            "note": "records are raw SI; whitening happens model-side",
            "position_scale": 20.0,
            "speed_scale": 15.0,
        },
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for cond, traj in pairs:
            label = traj.xy() if isinstance(traj, Trajectory) else np.asarray(traj)
            payload = (
                np.asarray(cond, dtype="<f4").tobytes()
                + np.asarray(label, dtype="<f4").tobytes()
            )
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)


def load_dataset_file(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Returns (conditions [M, D], labels [M, T, 2], header)."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a dataset file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        dim = header["cond_dim"]
        t, p = header["label_shape"]
        conds, labels = [], []
        for _ in range(header["n_records"]):
            (n_bytes,) = struct.unpack("<I", fh.read(4))
            payload = fh.read(n_bytes)
            expected = 4 * (dim + t * p)
            if len(payload) != expected:
                raise ValueError(f"corrupt record: {len(payload)} bytes, expected {expected}")
            arr = np.frombuffer(payload, dtype="<f4")
            conds.append(arr[:dim].astype(float))
            labels.append(arr[dim:].astype(float).reshape(t, p))
    return np.asarray(conds), np.asarray(labels), header
