"""Forward-process tables: beta, cumulative alpha-bar, and sigma.

Timesteps are 1-indexed (t = 1..T). Tables are kept in float64 so the
cumulative products stay accurate; tensors are cast to the working
dtype at the point of use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
import torch

from ..errors import ConfigError

Planes = Tuple[torch.Tensor, torch.Tensor, torch.Tensor]
PlanesOrTensor = Union[Planes, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    betas: torch.Tensor        # (T,), float64
    alpha_bars: torch.Tensor   # (T,), float64, cumprod of (1 - beta)
    sigmas: torch.Tensor       # (T,), float64, sqrt(beta)
    start: float
    end: float

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def _idx(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ConfigError(f"timestep {t} outside 1..{self.T}")
        return t - 1

    def beta(self, t: int) -> float:
        return float(self.betas[self._idx(t)])

    def alpha_bar(self, t: int) -> float:
        """alpha_bar(0) = 1 by convention (used by few-step samplers)."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[self._idx(t)])

    def sigma(self, t: int) -> float:
        return float(self.sigmas[self._idx(t)])

    def gather_alpha_bar(self, t: torch.Tensor) -> torch.Tensor:
        """alpha_bar for a batch of 1-indexed steps; float64 output."""
        if t.min() < 1 or t.max() > self.T:
            raise ConfigError(f"timesteps outside 1..{self.T}")
        return self.alpha_bars[t.long() - 1]

    def to_dict(self) -> dict:
        return {"T": self.T, "start": self.start, "end": self.end}


def make_linear_schedule(T: int, start: float, end: float) -> NoiseSchedule:
    """Linear beta schedule inclusive of both endpoints; sigma_t^2 = beta_t."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not (0.0 < start <= end < 1.0):
        raise ConfigError(f"need 0 < start <= end < 1, got start={start} end={end}")
    betas = torch.linspace(start, end, T, dtype=torch.float64)
    alpha_bars = torch.cumprod(1.0 - betas, dim=0)
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars,
                         sigmas=betas.sqrt(), start=start, end=end)


def _scale(planes: PlanesOrTensor, a, b, noise: PlanesOrTensor) -> PlanesOrTensor:
    if isinstance(planes, torch.Tensor):
        return a * planes + b * noise
    return tuple(a * z + b * e for z, e in zip(planes, noise))


def q_sample(z0: PlanesOrTensor, t: Union[int, torch.Tensor], eps: PlanesOrTensor,
             schedule: NoiseSchedule) -> PlanesOrTensor:
    """Forward process: z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps, plane-wise.

    t may be a scalar step or a (B,) batch of per-sample steps; batched t
    broadcasts over the trailing plane dimensions.
    """
    ref = z0 if isinstance(z0, torch.Tensor) else z0[0]
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        ab = schedule.gather_alpha_bar(t).to(ref.dtype)
        shape = (-1,) + (1,) * (ref.ndim - 1)
        a = ab.sqrt().view(shape)
        b = (1.0 - ab).sqrt().view(shape)
    else:
        ab = schedule.alpha_bar(int(t))
        a = ref.new_tensor(ab ** 0.5)
        b = ref.new_tensor((1.0 - ab) ** 0.5)
    if not isinstance(z0, torch.Tensor):
        if isinstance(eps, torch.Tensor) or len(eps) != len(z0):
            raise ConfigError("noise must be one tensor per plane")
        for z, e in zip(z0, eps):
            if z.shape != e.shape:
                raise ConfigError(f"noise shape {tuple(e.shape)} != plane {tuple(z.shape)}")
    elif isinstance(eps, torch.Tensor) and z0.shape != eps.shape:
        raise ConfigError(f"noise shape {tuple(eps.shape)} != input {tuple(z0.shape)}")
    return _scale(z0, a, b, eps)


def recover_z0(z_t: PlanesOrTensor, t: int, eps: PlanesOrTensor,
               schedule: NoiseSchedule) -> PlanesOrTensor:
    """Algebraic inverse of q_sample for known noise: the x0-prediction identity."""
    ab = schedule.alpha_bar(t)
    a = 1.0 / ab ** 0.5
    b = -((1.0 - ab) ** 0.5) / ab ** 0.5
    return _scale(z_t, a, b, eps)
