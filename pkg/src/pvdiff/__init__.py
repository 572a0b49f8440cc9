"""Projected-latent video diffusion at desk scale.

Two-stage pipeline: a triplane video autoencoder compresses clips into
three 2D latent planes, and a latent diffusion model with a shared 2D
denoiser plus cross-plane attention models them, jointly trained for
unconditional and previous-clip-conditioned generation so videos of
arbitrary length can be sampled clip by clip.
"""

__version__ = "0.1.0"
