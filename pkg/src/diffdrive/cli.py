"""Command-line interface.

Subcommands cover the full pipeline: `gen-data` rolls scenarios into a
training file, `train` fits a planner checkpoint, `simulate` runs closed
loop episodes, `eval`/`report` aggregate them, `ablate` sweeps anchor
counts, and `score`/`comfort` evaluate single trajectories from JSON files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .comfort import ComfortWeights, comfort_index
from .regulator import HttpDirectiveProvider, MockDirectiveProvider
from .scene import ConditionConfig, SceneContext
from .scoring import ScorerWeights, score
from .trajectory import EgoStatus, Trajectory
from .diffusion.training import PlannerCheckpoint, TrainConfig, train
from .sim.closed_loop import EpisodeLog, SamplerConfig, run_closed_loop
from .sim.dataset import build_dataset, load_dataset_file, save_dataset_file
from .sim.metrics import (
    ablate_anchors,
    evaluate,
    write_ablation_csv,
    write_metrics_csv,
)
from .sim.scenarios import ALL_KINDS, ScenarioKind, generate_scenario

logger = logging.getLogger(__name__)


def _load_ego(path: str | None, traj: Trajectory) -> EgoStatus:
    """Ego from a JSON file, or a default inferred from the trajectory's
    first segment (position at the origin of the trajectory frame)."""
    if path:
        d = json.loads(Path(path).read_text())
        return EgoStatus(
            position=tuple(d["position"]),
            yaw=float(d.get("yaw", 0.0)),
            speed=float(d.get("speed", 0.0)),
            accel=float(d.get("accel", 0.0)),
        )
    first = np.array([traj.points[0].x, traj.points[0].y])
    dist = float(np.linalg.norm(first))
    yaw = float(np.arctan2(first[1], first[0])) if dist > 1e-9 else 0.0
    return EgoStatus(position=(0.0, 0.0), yaw=yaw, speed=dist / traj.dt, accel=0.0)


def _provider_from_args(args):
    if args.provider == "http":
        if not args.provider_url:
            raise SystemExit("--provider http requires --provider-url")
        return HttpDirectiveProvider(args.provider_url, timeout_s=args.provider_timeout_ms / 1000.0)
    return MockDirectiveProvider()


def cmd_score(args) -> int:
    traj = Trajectory.from_json(Path(args.trajectory).read_text())
    scene = SceneContext.from_json(Path(args.scene).read_text())
    weights = (
        ScorerWeights.from_dict(json.loads(Path(args.weights).read_text()))
        if args.weights
        else ScorerWeights()
    )
    ego = _load_ego(args.ego, traj)
    breakdown = score(traj, scene, ego, weights, wheelbase=args.wheelbase)
    print(json.dumps(breakdown.as_dict(), indent=2, sort_keys=True))
    return 0


def cmd_comfort(args) -> int:
    pred = Trajectory.from_json(Path(args.pred).read_text())
    truth = Trajectory.from_json(Path(args.truth).read_text())
    weights = (
        ComfortWeights.from_dict(json.loads(Path(args.weights).read_text()))
        if args.weights
        else ComfortWeights()
    )
    ego = _load_ego(args.ego, truth)
    report = comfort_index(pred, truth, ego, weights, alpha=args.alpha)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_gen_data(args) -> int:
    cond_config = ConditionConfig()
    pairs = build_dataset(args.n, args.seed, duration=args.duration, cond_config=cond_config)
    save_dataset_file(
        pairs, args.out, cond_config,
        meta={"n_scenarios": args.n, "seed": args.seed, "duration": args.duration},
    )
    print(f"wrote {len(pairs)} pairs from {args.n} scenarios to {args.out}")
    return 0


def cmd_train(args) -> int:
    conds, labels, header = load_dataset_file(args.data)
    cond_config = ConditionConfig.from_dict(header["cond_config"])
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        n_steps=args.steps,
        hidden=args.hidden,
    )
    checkpoint = train((conds, labels), config, cond_config)
    checkpoint.save(args.out)
    curve = checkpoint.meta["loss_curve"]
    print(
        f"trained {checkpoint.params.n_parameters()} params on {len(conds)} pairs: "
        f"loss {curve[0]:.4f} -> {curve[-1]:.4f} "
        f"in {checkpoint.meta['train_seconds']:.1f}s; saved to {args.out}"
    )
    return 0


def _parse_kinds(text: str):
    if text == "mix":
        return ALL_KINDS
    return tuple(ScenarioKind(k) for k in text.split(","))


def cmd_simulate(args) -> int:
    checkpoint = PlannerCheckpoint.load(args.checkpoint)
    provider = _provider_from_args(args)
    sampler = SamplerConfig(
        method=args.sampler, n_anchors=args.anchors, ddim_steps=args.ddim_steps, seed=args.seed
    )
    kinds = _parse_kinds(args.scenario_kind)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    total_ticks = 0
    total_wall = 0.0
    for i in range(args.n):
        scenario = generate_scenario(args.seed + i, kinds[i % len(kinds)], duration=args.duration)
        episode = run_closed_loop(
            scenario, checkpoint, provider=provider, sampler=sampler,
            selection=args.selection, seed=args.seed + i,
        )
        episode.save(out_dir / f"episode_{i:04d}.json")
        total_ticks += episode.n_ticks
        total_wall += episode.wall_time or 0.0
        status = "collision" if episode.hard_collision else "ok"
        print(f"episode {i}: kind={scenario.kind.value} ticks={episode.n_ticks} {status}")
    if total_wall > 0:
        print(f"planning throughput: {total_ticks / total_wall:.2f} ticks/s")
    return 0


def _load_episodes(episodes_dir):
    paths = sorted(Path(episodes_dir).glob("episode_*.json*"))
    if not paths:
        raise SystemExit(f"no episode files under {episodes_dir}")
    return [EpisodeLog.load(p) for p in paths]


def cmd_eval(args) -> int:
    metrics = evaluate(_load_episodes(args.episodes))
    write_metrics_csv(metrics, args.out)
    print(json.dumps({"l2": metrics.l2, "collision_rate": metrics.collision_rate}, indent=2))
    print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    metrics = evaluate(_load_episodes(args.episodes))
    report = metrics.to_dict()
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    if args.comfort_csv:
        Path(args.comfort_csv).write_text(metrics.comfort.to_csv())
    print(f"wrote {args.out}")
    return 0


def cmd_ablate(args) -> int:
    checkpoint = PlannerCheckpoint.load(args.checkpoint)
    counts = [int(c) for c in args.anchors.split(",")]
    kinds = _parse_kinds(args.scenario_kind)
    scenarios = [
        generate_scenario(args.seed + i, kinds[i % len(kinds)], duration=args.duration)
        for i in range(args.scenarios)
    ]
    sampler = SamplerConfig(method=args.sampler, ddim_steps=args.ddim_steps, seed=args.seed)
    rows = ablate_anchors(counts, scenarios, checkpoint, sampler=sampler, seed=args.seed)
    write_ablation_csv(rows, args.out)
    for count, metrics in rows:
        print(f"anchors={count}: l2_avg={metrics.l2['avg']:.3f} coll_avg={metrics.collision_rate['avg']:.2f}%")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffdrive")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a trajectory JSON against a scene JSON")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--weights")
    p.add_argument("--ego")
    p.add_argument("--wheelbase", type=float, default=2.7)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("comfort", help="comfort report for predicted vs reference trajectory")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--weights")
    p.add_argument("--ego")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_comfort)

    p = sub.add_parser("gen-data", help="generate a training dataset file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=12.0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a planner checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--hidden", type=int, default=64)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="run closed-loop episodes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=12.0)
    p.add_argument("--scenario-kind", default="mix")
    p.add_argument("--anchors", type=int, default=8)
    p.add_argument("--sampler", choices=["ddim", "ddpm"], default="ddim")
    p.add_argument("--ddim-steps", type=int, default=10)
    p.add_argument("--selection", choices=["best", "random"], default="best")
    p.add_argument("--provider", choices=["mock", "http"], default="mock")
    p.add_argument("--provider-url")
    p.add_argument("--provider-timeout-ms", type=int, default=2000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="aggregate episodes into a metrics CSV")
    p.add_argument("--episodes", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate episodes into a JSON report")
    p.add_argument("--episodes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--comfort-csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ablate", help="sweep anchor counts over shared scenarios")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--anchors", default="2,4,6,8")
    p.add_argument("--scenarios", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=12.0)
    p.add_argument("--scenario-kind", default="mix")
    p.add_argument("--sampler", choices=["ddim", "ddpm"], default="ddim")
    p.add_argument("--ddim-steps", type=int, default=10)
    p.add_argument("--out", default="ablation.csv")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
