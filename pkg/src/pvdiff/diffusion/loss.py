"""Joint unconditional/conditional noise-prediction objective.

Each training example is a consecutive-clip latent pair (z0_prev, z0_cur).
The current clip's latent is noised by the forward process; the denoiser
is scored both with the previous clip's latent as conditioning and with
the null (zero) conditioning, weighted lam and (1 - lam). Both branches
see the same noised input and the same target noise.

`both_branches` evaluates the two passes explicitly; `bernoulli` picks
one branch per example with probability lam, which matches the weighted
objective in expectation at half the cost.
"""

from __future__ import annotations

from typing import Optional, Tuple

import torch

from ..errors import ConfigError
from .schedule import NoiseSchedule, q_sample
from .unet import DenoiserBundle

Planes = Tuple[torch.Tensor, torch.Tensor, torch.Tensor]

JOINT_MODES = ("both_branches", "bernoulli")


def _mse(eps: Planes, eps_hat: Planes) -> torch.Tensor:
    """Mean squared error over all plane elements."""
    num = sum((e - eh).pow(2).sum() for e, eh in zip(eps, eps_hat))
    den = sum(e.numel() for e in eps)
    return num / den


def bernoulli_branch_mask(lam: float, batch: int,
                          generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Per-example conditional-branch selector, True with probability lam."""
    u = torch.rand(batch, generator=generator)
    return u < lam


def diffusion_loss(bundle: DenoiserBundle, pair_latents: Tuple[Planes, Planes],
                   t: torch.Tensor, eps: Planes, lam: float,
                   schedule: NoiseSchedule, joint_mode: str = "both_branches",
                   generator: Optional[torch.Generator] = None,
                   branch_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    if not 0.0 < lam < 1.0:
        raise ConfigError(f"lambda must lie in (0, 1), got {lam}")
    if joint_mode not in JOINT_MODES:
        raise ConfigError(f"joint_mode must be one of {JOINT_MODES}")
    z0_prev, z0_cur = pair_latents
    z_t = q_sample(z0_cur, t, eps, schedule)
    if joint_mode == "both_branches":
        eps_cond = bundle(z_t, z0_prev, t)
        eps_null = bundle(z_t, None, t)
        return lam * _mse(eps, eps_cond) + (1.0 - lam) * _mse(eps, eps_null)
    batch = z0_cur[0].shape[0]
    if branch_mask is None:
        branch_mask = bernoulli_branch_mask(lam, batch, generator)
    mask = branch_mask.to(z0_cur[0].dtype).view(-1, *([1] * (z0_cur[0].ndim - 1)))
    cond = tuple(p * mask for p in z0_prev)
    eps_hat = bundle(z_t, cond, t)
    return _mse(eps, eps_hat)
