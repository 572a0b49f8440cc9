from .autoencoder import (AutoencoderConfig, TriplaneDecoder, TriplaneEncoder,
                          build_autoencoder, count_parameters, decode, encode)
from .triplane import CubicLatent, LatentGrid, TriplaneLatent, build_latent_grid

__all__ = [
    "AutoencoderConfig",
    "TriplaneEncoder",
    "TriplaneDecoder",
    "build_autoencoder",
    "encode",
    "decode",
    "count_parameters",
    "TriplaneLatent",
    "CubicLatent",
    "LatentGrid",
    "build_latent_grid",
]
