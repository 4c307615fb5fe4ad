"""Episode evaluation: displacement error, collision rate, comfort, fps.

L2@k compares the plan issued at each tick against the expert's position k
seconds later in absolute time; collision rate@k counts ticks whose
selected plan, truncated at k seconds, penetrates any obstacle. Comfort
aggregates the raw per-horizon indices over all ticks and re-normalizes
the means. The fps figure is wall-clock and deliberately kept out of the
CSV so metric files stay byte-identical across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..comfort import (
    DEFAULT_ALPHA,
    HORIZONS_S,
    ComfortReport,
    ComfortWeights,
    HorizonComfort,
    comfort_index,
)
from ..geometry import to_world
from ..trajectory import Trajectory, min_obstacle_distance
from .bicycle import SimParams
from .closed_loop import EpisodeLog, SamplerConfig, run_closed_loop, with_anchors
from ..diffusion.sampling import sample_ddim, sample_ddpm
from ..diffusion.training import PlannerCheckpoint

HORIZON_KEYS = {1.0: "1s", 2.0: "2s", 3.0: "3s"}


class NoEpisodes(ValueError):
    pass


@dataclass(frozen=True)
class EvalMetrics:
    l2: dict[str, float]  # meters, keys 1s/2s/3s/avg
    collision_rate: dict[str, float]  # percent, same keys
    comfort: ComfortReport
    fps: float  # wall-clock ticks per second; 0 when unknown
    n_episodes: int
    n_ticks: int

    CSV_COLUMNS = (
        "l2_1s", "l2_2s", "l2_3s", "l2_avg",
        "coll_1s", "coll_2s", "coll_3s", "coll_avg",
        "comfort_cp_1s", "comfort_cp_2s", "comfort_cp_3s", "comfort_cp_total",
        "comfort_c_total",
    )

    def csv_row(self) -> dict[str, float]:
        row = {f"l2_{k}": v for k, v in self.l2.items()}
        row.update({f"coll_{k}": v for k, v in self.collision_rate.items()})
        for h in self.comfort.horizons:
            row[f"comfort_cp_{HORIZON_KEYS[h.horizon_s]}"] = h.c_p
        row["comfort_cp_total"] = self.comfort.total.c_p
        row["comfort_c_total"] = self.comfort.total.c
        return row

    def to_dict(self) -> dict:
        return {
            "l2": dict(self.l2),
            "collision_rate": dict(self.collision_rate),
            "comfort": self.comfort.to_dict(),
            "fps": self.fps,
            "n_episodes": self.n_episodes,
            "n_ticks": self.n_ticks,
        }


def evaluate(
    episodes,
    *,
    comfort_weights: ComfortWeights = ComfortWeights(),
    alpha: float = DEFAULT_ALPHA,
    params: SimParams = SimParams(),
) -> EvalMetrics:
    episodes = list(episodes)
    if not episodes:
        raise NoEpisodes("evaluate needs at least one episode")

    l2_samples: dict[float, list[float]] = {h: [] for h in HORIZONS_S}
    coll_counts: dict[float, int] = {h: 0 for h in HORIZONS_S}
    comfort_sums: dict[float, float] = {h: 0.0 for h in HORIZONS_S}
    comfort_total_sum = 0.0
    n_ticks = 0
    wall = 0.0
    wall_known = True

    for ep in episodes:
        scen = ep.scenario
        if ep.wall_time is None:
            wall_known = False
        else:
            wall += ep.wall_time
        for tick_i, rec in enumerate(ep.ticks):
            n_ticks += 1
            ego = rec.state.as_ego_status()
            world = to_world(rec.candidates[rec.selected], ego.position, ego.yaw)
            scene_t = scen.scene_at(rec.t)
            for h in HORIZONS_S:
                steps = int(round(h / scen.dt))
                expert_pos = scen.expert_states[tick_i + steps].position
                l2_samples[h].append(float(np.linalg.norm(world[steps - 1] - expert_pos)))
                truncated = Trajectory.from_xy(world[:steps], scen.dt)
                if min_obstacle_distance(truncated, scene_t, params.ego_radius) < 0.0:
                    coll_counts[h] += 1
            plan = Trajectory.from_xy(world, scen.dt)
            report = comfort_index(
                plan, scen.expert_future(tick_i), ego, comfort_weights, alpha,
                wheelbase=params.wheelbase,
            )
            for hc in report.horizons:
                comfort_sums[hc.horizon_s] += hc.c
            comfort_total_sum += report.total.c

    l2 = {HORIZON_KEYS[h]: float(np.mean(l2_samples[h])) for h in HORIZONS_S}
    l2["avg"] = float(np.mean([l2[HORIZON_KEYS[h]] for h in HORIZONS_S]))
    coll = {HORIZON_KEYS[h]: 100.0 * coll_counts[h] / n_ticks for h in HORIZONS_S}
    coll["avg"] = float(np.mean([coll[HORIZON_KEYS[h]] for h in HORIZONS_S]))

    rows = []
    for h in HORIZONS_S:
        c = comfort_sums[h] / n_ticks
        c_n = float(np.exp(-alpha * c))
        rows.append(HorizonComfort(h, c, c_n, 100.0 * c_n))
    c_tot = comfort_total_sum / n_ticks
    c_n = float(np.exp(-alpha * c_tot))
    comfort = ComfortReport(tuple(rows), HorizonComfort(HORIZONS_S[-1], c_tot, c_n, 100.0 * c_n), alpha)

    fps = (n_ticks / wall) if (wall_known and wall > 0) else 0.0
    return EvalMetrics(
        l2=l2,
        collision_rate=coll,
        comfort=comfort,
        fps=fps,
        n_episodes=len(episodes),
        n_ticks=n_ticks,
    )


def write_metrics_csv(metrics: EvalMetrics, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(EvalMetrics.CSV_COLUMNS))
        writer.writeheader()
        writer.writerow({k: repr(v) for k, v in metrics.csv_row().items()})


def ablate_anchors(
    anchor_counts,
    scenarios,
    checkpoint: PlannerCheckpoint,
    *,
    sampler: SamplerConfig = SamplerConfig(),
    seed: int = 0,
    params: SimParams = SimParams(),
) -> list[tuple[int, EvalMetrics]]:
    """Closed-loop metrics per anchor count over a shared scenario set.

    Scenario seeds and per-tick sampling seeds are reused across counts, and
    the strided sampler refines each anchor independently, so smaller anchor
    sets are exact prefixes of larger ones (common random numbers).
    """
    anchor_counts = list(anchor_counts)
    if not anchor_counts:
        raise ValueError("anchor_counts must be non-empty")
    results = []
    for count in anchor_counts:
        episodes = [
            run_closed_loop(
                scen, checkpoint, sampler=with_anchors(sampler, count),
                seed=seed, params=params,
            )
            for scen in scenarios
        ]
        results.append((count, evaluate(episodes, params=params)))
    return results


def write_ablation_csv(rows: list[tuple[int, EvalMetrics]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["anchors", *EvalMetrics.CSV_COLUMNS])
        writer.writeheader()
        for count, metrics in rows:
            out = {k: repr(v) for k, v in metrics.csv_row().items()}
            out["anchors"] = count
            writer.writerow(out)


def open_loop_endpoint_l2(
    checkpoint: PlannerCheckpoint,
    conds: np.ndarray,
    labels: np.ndarray,
    *,
    method: str = "ddpm",
    n_anchors: int = 8,
    ddim_steps: int = 10,
    seed: int = 0,
) -> float:
    """Mean distance between anchor-mean endpoints and label endpoints (m)."""
    batch = sample_batch(checkpoint, conds, method=method, n_anchors=n_anchors,
                         ddim_steps=ddim_steps, seed=seed)
    anchor_mean = batch.mean(axis=1)  # [M, T, 2]
    labels = np.asarray(labels, dtype=float)
    return float(np.mean(np.linalg.norm(anchor_mean[:, -1] - labels[:, -1], axis=1)))


def sample_batch(
    checkpoint: PlannerCheckpoint,
    conds: np.ndarray,
    *,
    method: str = "ddpm",
    n_anchors: int = 8,
    ddim_steps: int = 10,
    seed: int = 0,
) -> np.ndarray:
    """[M, N_a, T, 2] candidates for a batch of conditions."""
    checkpoint.require_trained()
    if method == "ddpm":
        return sample_ddpm(
            conds, n_anchors, checkpoint.params, checkpoint.schedule, seed,
            norm_mean=checkpoint.norm_mean, norm_std=checkpoint.norm_std,
        )
    if method == "ddim":
        return sample_ddim(
            conds, n_anchors, checkpoint.params, checkpoint.schedule, ddim_steps, seed,
            norm_mean=checkpoint.norm_mean, norm_std=checkpoint.norm_std,
        )
    raise ValueError(f"unknown sampler method {method!r}")
