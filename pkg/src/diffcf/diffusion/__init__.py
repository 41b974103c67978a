from .chain import denoise_step, filter_image, forward_diffuse
from .denoiser import (
    DenoiserModel,
    DenoiserOutput,
    EpsilonNet,
    ImageGeometry,
    load_denoiser,
    save_denoiser,
)
from .schedule import NoiseSchedule, RespacedSchedule, Schedule, build_schedule, respace
from .training import DenoiserTrainConfig, TrainSummary, train_denoiser

__all__ = [
    "DenoiserModel",
    "DenoiserOutput",
    "DenoiserTrainConfig",
    "EpsilonNet",
    "ImageGeometry",
    "NoiseSchedule",
    "RespacedSchedule",
    "Schedule",
    "TrainSummary",
    "build_schedule",
    "denoise_step",
    "filter_image",
    "forward_diffuse",
    "load_denoiser",
    "respace",
    "save_denoiser",
    "train_denoiser",
]
