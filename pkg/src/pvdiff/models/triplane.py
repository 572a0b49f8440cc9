"""Triplane latent containers and the latent-grid broadcast.

A video latent is three 2D planes: a content plane indexed by (h, w)
plus two motion planes indexed by (s, w) and (s, h). The decoder-side
grid places, at every (s, h, w), the concatenation of the three
plane vectors addressing that position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import torch

from ..errors import GeometryError

Planes = Tuple[torch.Tensor, torch.Tensor, torch.Tensor]


@dataclass
class TriplaneLatent:
    """Single-clip latent: z_s (C, H', W'), z_h (C, S, W'), z_w (C, S, H').

    Encoder outputs are tanh-bounded, strictly inside (-1, 1); sampled
    latents share the shapes but not the bound, so the range check is a
    separate method rather than a construction invariant.
    """

    z_s: torch.Tensor
    z_h: torch.Tensor
    z_w: torch.Tensor

    def __post_init__(self):
        zs, zh, zw = self.z_s, self.z_h, self.z_w
        if zs.ndim != 3 or zh.ndim != 3 or zw.ndim != 3:
            raise GeometryError("triplane latent planes must be 3-d (C, ., .)")
        c, hp, wp = zs.shape
        if zh.shape[0] != c or zw.shape[0] != c:
            raise GeometryError(f"channel mismatch: {zs.shape} {zh.shape} {zw.shape}")
        s = zh.shape[1]
        if zw.shape[1] != s:
            raise GeometryError(f"frame-count mismatch: z_h {zh.shape} vs z_w {zw.shape}")
        if zh.shape[2] != wp or zw.shape[2] != hp:
            raise GeometryError(
                f"spatial mismatch: z_s {zs.shape}, z_h {zh.shape}, z_w {zw.shape}")
        for name, z in (("z_s", zs), ("z_h", zh), ("z_w", zw)):
            if not torch.isfinite(z).all():
                raise GeometryError(f"{name} contains non-finite values")

    @property
    def channels(self) -> int:
        return self.z_s.shape[0]

    @property
    def geometry(self) -> Tuple[int, int, int]:
        """(S, H', W')."""
        return self.z_h.shape[1], self.z_s.shape[1], self.z_s.shape[2]

    @property
    def num_scalars(self) -> int:
        return self.z_s.numel() + self.z_h.numel() + self.z_w.numel()

    def check_bounded(self, limit: float = 1.0) -> None:
        """Assert every entry lies strictly inside (-limit, limit)."""
        m = max(self.z_s.abs().max().item(), self.z_h.abs().max().item(),
                self.z_w.abs().max().item())
        if m >= limit:
            raise GeometryError(f"latent magnitude {m} not strictly inside (-{limit}, {limit})")

    def planes(self, batched: bool = False) -> Planes:
        if batched:
            return (self.z_s[None], self.z_h[None], self.z_w[None])
        return (self.z_s, self.z_h, self.z_w)

    @classmethod
    def from_planes(cls, planes: Planes) -> "TriplaneLatent":
        zs, zh, zw = planes
        if zs.ndim == 4:
            if zs.shape[0] != 1:
                raise GeometryError("from_planes expects batch size 1")
            zs, zh, zw = zs[0], zh[0], zw[0]
        return cls(zs, zh, zw)


@dataclass
class CubicLatent:
    """Projection-off sanity latent: a full (3C, S, H', W') tanh-bounded grid."""

    v: torch.Tensor

    def __post_init__(self):
        if self.v.ndim != 4 or self.v.shape[0] % 3 != 0:
            raise GeometryError(f"cubic latent must be (3C, S, H', W'), got {tuple(self.v.shape)}")

    @property
    def num_scalars(self) -> int:
        return self.v.numel()


@dataclass
class LatentGrid:
    """Broadcast grid v with v[:, s, h, w] = [z_s[:, h, w], z_h[:, s, w], z_w[:, s, h]]."""

    v: torch.Tensor

    def __post_init__(self):
        if self.v.ndim != 4 or self.v.shape[0] % 3 != 0:
            raise GeometryError(f"latent grid must be (3C, S, H', W'), got {tuple(self.v.shape)}")


def grid_from_planes(z_s: torch.Tensor, z_h: torch.Tensor, z_w: torch.Tensor) -> torch.Tensor:
    """Batched latent-grid broadcast.

    Inputs (B, C, H', W'), (B, C, S, W'), (B, C, S, H') yield
    (B, 3C, S, H', W'); a pure gather with no parameters.
    """
    if z_s.ndim != 4:
        raise GeometryError("grid_from_planes expects batched (B, C, ., .) planes")
    b, c, hp, wp = z_s.shape
    s = z_h.shape[2]
    if z_h.shape != (b, c, s, wp) or z_w.shape != (b, c, s, hp):
        raise GeometryError(
            f"inconsistent plane shapes: {tuple(z_s.shape)} {tuple(z_h.shape)} {tuple(z_w.shape)}")
    g_s = z_s[:, :, None, :, :].expand(b, c, s, hp, wp)
    g_h = z_h[:, :, :, None, :].expand(b, c, s, hp, wp)
    g_w = z_w[:, :, :, :, None].expand(b, c, s, hp, wp)
    return torch.cat([g_s, g_h, g_w], dim=1)


def build_latent_grid(z: TriplaneLatent) -> LatentGrid:
    """Assemble the decoder-side 3D grid from a single-clip latent."""
    if isinstance(z, CubicLatent):
        return LatentGrid(z.v)
    zs, zh, zw = z.planes(batched=True)
    return LatentGrid(grid_from_planes(zs, zh, zw)[0])
