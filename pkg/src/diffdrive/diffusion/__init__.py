from .schedule import (
    NoiseSchedule,
    ShapeMismatch,
    StepOutOfRange,
    forward_noise,
    predict_clean,
)
from .denoiser import DenoiserConfig, DenoiserParams, denoiser_forward
from .sampling import StepsOutOfRange, denoise_step, sample_ddim, sample_ddpm
from .training import (
    EmptyDataset,
    PlannerCheckpoint,
    TrainConfig,
    UntrainedCheckpoint,
    train,
)

__all__ = [
    "NoiseSchedule",
    "ShapeMismatch",
    "StepOutOfRange",
    "StepsOutOfRange",
    "forward_noise",
    "predict_clean",
    "DenoiserConfig",
    "DenoiserParams",
    "denoiser_forward",
    "denoise_step",
    "sample_ddim",
    "sample_ddpm",
    "EmptyDataset",
    "PlannerCheckpoint",
    "TrainConfig",
    "UntrainedCheckpoint",
    "train",
]
