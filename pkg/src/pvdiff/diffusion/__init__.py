from .schedule import NoiseSchedule, make_linear_schedule, q_sample
from .unet import DenoiserBundle, DenoiserConfig, denoise
from .loss import diffusion_loss

__all__ = [
    "NoiseSchedule",
    "make_linear_schedule",
    "q_sample",
    "DenoiserConfig",
    "DenoiserBundle",
    "denoise",
    "diffusion_loss",
]
