from .bicycle import SimParams, bicycle_step
from .scenarios import ExpertCollision, Scenario, ScenarioKind, generate_scenario
from .dataset import build_dataset, load_dataset_file, save_dataset_file
from .closed_loop import (
    DiffusionPolicy,
    EpisodeLog,
    ExpertPlaybackPolicy,
    SamplerConfig,
    StandstillPolicy,
    run_closed_loop,
)
from .metrics import EvalMetrics, NoEpisodes, ablate_anchors, evaluate, open_loop_endpoint_l2

__all__ = [
    "SimParams",
    "bicycle_step",
    "ExpertCollision",
    "Scenario",
    "ScenarioKind",
    "generate_scenario",
    "build_dataset",
    "load_dataset_file",
    "save_dataset_file",
    "DiffusionPolicy",
    "EpisodeLog",
    "ExpertPlaybackPolicy",
    "SamplerConfig",
    "StandstillPolicy",
    "run_closed_loop",
    "EvalMetrics",
    "NoEpisodes",
    "ablate_anchors",
    "evaluate",
    "open_loop_endpoint_l2",
]
