"""Closed-loop episode runner: plan, score, select, track, repeat.

Each 0.5 s tick encodes the scene into a condition, samples candidate
trajectories, scores them with the weights currently in force, and tracks
the first segment of the winner through the bicycle model (receding
horizon). The style regulator is consulted on its 5 s cadence at tick
boundaries. Episodes stop at the scenario duration or on a hard collision,
which is flagged rather than raised. With fixed seeds the whole episode,
including its serialized form, is bit-reproducible.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from ..geometry import to_local, to_world, wrap_angle
from ..regulator import MockDirectiveProvider, StyleDirective, StyleRegulator
from ..scene import ConditionConfig, HistoryBuffer, HistoryEntry, SceneContext, encode_condition
from ..scoring import CostBreakdown, ScorerWeights, select_best
from ..trajectory import BicycleState, Trajectory, derive_kinematics
from ..diffusion.sampling import sample_ddim, sample_ddpm
from ..diffusion.training import PlannerCheckpoint
from .bicycle import SimParams, bicycle_step
from .scenarios import Scenario


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "ddim"  # "ddim" | "ddpm"
    n_anchors: int = 8
    ddim_steps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("ddim", "ddpm"):
            raise ValueError(f"unknown sampler method {self.method!r}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_anchors": self.n_anchors,
            "ddim_steps": self.ddim_steps,
            "seed": self.seed,
        }


class DiffusionPolicy:
    """Samples candidate trajectories from a trained checkpoint."""

    def __init__(self, checkpoint: PlannerCheckpoint, sampler: SamplerConfig = SamplerConfig()):
        checkpoint.require_trained()
        self.checkpoint = checkpoint
        self.sampler = sampler

    def propose(self, scene, ego, cond, tick: int) -> np.ndarray:
        ckpt = self.checkpoint
        seed = [self.sampler.seed, tick]
        if self.sampler.method == "ddim":
            batch = sample_ddim(
                cond, self.sampler.n_anchors, ckpt.params, ckpt.schedule,
                self.sampler.ddim_steps, seed,
                norm_mean=ckpt.norm_mean, norm_std=ckpt.norm_std,
            )
        else:
            batch = sample_ddpm(
                cond, self.sampler.n_anchors, ckpt.params, ckpt.schedule, seed,
                norm_mean=ckpt.norm_mean, norm_std=ckpt.norm_std,
            )
        return batch[0]

    def describe(self) -> dict:
        return {"policy": "diffusion", **self.sampler.to_dict()}


class ExpertPlaybackPolicy:
    """Single candidate: the scenario's own expert future (sanity baseline)."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def propose(self, scene, ego, cond, tick: int) -> np.ndarray:
        world = self.scenario.expert_future(tick).xy()
        return to_local(world, ego.position, ego.yaw)[None, :, :]

    def describe(self) -> dict:
        return {"policy": "expert_playback"}


class StandstillPolicy:
    """Single degenerate candidate that never moves (lower-bound baseline)."""

    def propose(self, scene, ego, cond, tick: int) -> np.ndarray:
        return np.zeros((1, 6, 2))

    def describe(self) -> dict:
        return {"policy": "standstill"}


@dataclass(frozen=True)
class TickRecord:
    t: float
    state: BicycleState
    condition: np.ndarray
    candidates: np.ndarray  # [N_a, T, 2], ego frame
    breakdowns: tuple[CostBreakdown, ...]
    selected: int
    weights: ScorerWeights


@dataclass(frozen=True)
class DirectiveRecord:
    t: float
    directive: StyleDirective
    weights_after: ScorerWeights


@dataclass
class EpisodeLog:
    scenario: Scenario
    policy_info: dict
    selection: str
    ticks: list[TickRecord]
    directives: list[DirectiveRecord]
    hard_collision: bool
    collision_time: float | None
    wall_time: float | None = None  # wall clock; never serialized or hashed

    @property
    def n_ticks(self) -> int:
        return len(self.ticks)

    def selected_world_trajectory(self, tick_index: int) -> Trajectory:
        rec = self.ticks[tick_index]
        ego = rec.state.as_ego_status()
        world = to_world(rec.candidates[rec.selected], ego.position, ego.yaw)
        return Trajectory.from_xy(world, self.scenario.dt)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "scenario": self.scenario.to_dict(),
            "policy": self.policy_info,
            "selection": self.selection,
            "hard_collision": self.hard_collision,
            "collision_time": self.collision_time,
            "ticks": [
                {
                    "t": rec.t,
                    "state": rec.state.as_array().tolist(),
                    "condition": rec.condition.tolist(),
                    "candidates": rec.candidates.tolist(),
                    "costs": [b.as_dict() for b in rec.breakdowns],
                    "selected": rec.selected,
                    "weights": rec.weights.as_dict(),
                }
                for rec in self.ticks
            ],
            "directives": [
                {
                    "t": rec.t,
                    "directive": rec.directive.to_dict(),
                    "weights_after": rec.weights_after.as_dict(),
                }
                for rec in self.directives
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeLog":
        ticks = [
            TickRecord(
                t=float(td["t"]),
                state=BicycleState.from_array(td["state"]),
                condition=np.asarray(td["condition"], dtype=float),
                candidates=np.asarray(td["candidates"], dtype=float),
                breakdowns=tuple(CostBreakdown.from_dict(c) for c in td["costs"]),
                selected=int(td["selected"]),
                weights=ScorerWeights.from_dict(td["weights"]),
            )
            for td in d["ticks"]
        ]
        directives = [
            DirectiveRecord(
                t=float(rd["t"]),
                directive=StyleDirective.from_dict(rd["directive"]),
                weights_after=ScorerWeights.from_dict(rd["weights_after"]),
            )
            for rd in d["directives"]
        ]
        return cls(
            scenario=Scenario.from_dict(d["scenario"]),
            policy_info=d["policy"],
            selection=d["selection"],
            ticks=ticks,
            directives=directives,
            hard_collision=bool(d["hard_collision"]),
            collision_time=d["collision_time"],
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def stable_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def save(self, path) -> None:
        path = str(path)
        if path.endswith(".gz"):
            with gzip.open(path, "wt") as fh:
                fh.write(self.canonical_json())
        else:
            with open(path, "w") as fh:
                fh.write(self.canonical_json())

    @classmethod
    def load(cls, path) -> "EpisodeLog":
        path = str(path)
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "rt") as fh:
            return cls.from_dict(json.load(fh))


def _track_first_segment(state: BicycleState, traj: Trajectory, params: SimParams):
    """Deadbeat-proportional tracking of the plan's first segment.

    Heading aims at the first waypoint; the speed reference reads the
    plan's own first-to-second segment so accelerations are fed forward a
    tick early (position updates lag speed by one Euler step).
    """
    pts = traj.xy()
    to_first = pts[0] - state.position
    dist = float(np.linalg.norm(to_first))
    if dist > 1e-6:
        theta_des = float(np.arctan2(to_first[1], to_first[0]))
        dtheta = wrap_angle(theta_des - state.theta)
        kappa_des = dtheta / (state.v * params.dt) if state.v * params.dt > 1e-6 else 0.0
        phi_des = float(
            np.clip(np.arctan(kappa_des * params.wheelbase), -params.max_steer, params.max_steer)
        )
    else:
        phi_des = state.phi
    phi_rate = float(
        np.clip((phi_des - state.phi) / params.dt, -params.max_steer_rate, params.max_steer_rate)
    )
    if len(pts) >= 2:
        v_ref = float(np.linalg.norm(pts[1] - pts[0])) / traj.dt
    else:
        v_ref = dist / traj.dt
    accel = float(np.clip((v_ref - state.v) / params.dt, -params.max_brake, params.max_accel))
    return accel, phi_rate


def _penetrates(state: BicycleState, scene: SceneContext, ego_radius: float) -> bool:
    for obs in scene.obstacles:
        if (
            float(np.linalg.norm(state.position - np.asarray(obs.center)))
            - ego_radius
            - obs.radius
            < 0.0
        ):
            return True
    return False


def run_closed_loop(
    scenario: Scenario,
    checkpoint: PlannerCheckpoint | None = None,
    weights0: ScorerWeights | None = None,
    provider=None,
    sampler: SamplerConfig = SamplerConfig(),
    *,
    policy=None,
    selection: str = "best",
    params: SimParams = SimParams(),
    seed: int = 0,
) -> EpisodeLog:
    """Run one scenario under a planning policy and return the full log."""
    if selection not in ("best", "random"):
        raise ValueError(f"unknown selection mode {selection!r}")
    if policy is None:
        if checkpoint is None:
            raise ValueError("either a trained checkpoint or an explicit policy is required")
        policy = DiffusionPolicy(checkpoint, sampler)
    cond_config = checkpoint.cond_config if checkpoint is not None else ConditionConfig()

    regulator = StyleRegulator(
        provider if provider is not None else MockDirectiveProvider(),
        weights0 if weights0 is not None else ScorerWeights(),
    )
    history = HistoryBuffer(cond_config.history_len)
    state = scenario.initial_state
    select_rng = np.random.default_rng([seed, 0x5E1])

    ticks: list[TickRecord] = []
    directives: list[DirectiveRecord] = []
    hard_collision = False
    collision_time: float | None = None

    t_start = time.perf_counter()
    for tick in range(scenario.n_ticks):
        t = tick * scenario.dt
        scene_t = scenario.scene_at(t)
        ego = state.as_ego_status()
        cond = encode_condition(scene_t, ego, history, cond_config)
        candidates = np.asarray(policy.propose(scene_t, ego, cond, tick), dtype=float)

        weights = regulator.weights
        best, breakdowns = select_best(
            candidates, scene_t, ego, weights,
            wheelbase=params.wheelbase, ego_radius=params.ego_radius,
        )
        idx = best if selection == "best" else int(select_rng.integers(len(candidates)))
        ticks.append(
            TickRecord(t, state, cond, candidates, tuple(breakdowns), idx, weights)
        )

        chosen = Trajectory.from_xy(
            to_world(candidates[idx], ego.position, ego.yaw), scenario.dt
        )
        profile = derive_kinematics(chosen, ego, params.wheelbase)
        history.push(HistoryEntry(chosen, profile.v, profile.a_t, profile.yaw, sim_time=t))

        controls = _track_first_segment(state, chosen, params)
        state = bicycle_step(state, controls, params.dt, params.wheelbase, params.max_steer)

        t_next = (tick + 1) * scenario.dt
        if _penetrates(state, scenario.scene_at(t_next), params.ego_radius):
            hard_collision = True
            collision_time = t_next
            break
        directive = regulator.maybe_update(t_next, scenario.scene_at(t_next), state.as_ego_status())
        if directive is not None:
            directives.append(DirectiveRecord(t_next, directive, regulator.weights))

    return EpisodeLog(
        scenario=scenario,
        policy_info=policy.describe(),
        selection=selection,
        ticks=ticks,
        directives=directives,
        hard_collision=hard_collision,
        collision_time=collision_time,
        wall_time=time.perf_counter() - t_start,
    )


def with_anchors(sampler: SamplerConfig, n_anchors: int) -> SamplerConfig:
    return replace(sampler, n_anchors=n_anchors)
