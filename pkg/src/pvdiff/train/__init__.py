from .ae import train_autoencoder
from .diffusion import train_diffusion

__all__ = ["train_autoencoder", "train_diffusion"]
