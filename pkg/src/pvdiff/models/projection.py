"""Axis projection heads: reduce the feature grid along one axis.

Each head is a small transformer over the reduced axis with a learnable
summary token; the summary output passes through a linear map and tanh
to become the per-position latent code.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .layers import TransformerBlock


class AxisProjector(nn.Module):
    def __init__(self, in_width: int, latent_channels: int, seq_len: int,
                 depth: int, width: int, heads: int, mlp_hidden: int):
        super().__init__()
        self.embed = nn.Linear(in_width, width)
        self.summary = nn.Parameter(torch.zeros(1, 1, width))
        self.pos = nn.Parameter(torch.zeros(1, seq_len + 1, width))
        nn.init.trunc_normal_(self.summary, std=0.02)
        nn.init.trunc_normal_(self.pos, std=0.02)
        self.blocks = nn.ModuleList([
            TransformerBlock(width, heads, mlp_hidden) for _ in range(depth)])
        self.norm = nn.LayerNorm(width)
        self.head = nn.Linear(width, latent_channels)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        """(B*, L, in_width) -> (B*, latent_channels), tanh-bounded."""
        x = self.embed(seq)
        summary = self.summary.expand(x.shape[0], -1, -1)
        x = torch.cat([summary, x], dim=1) + self.pos
        for blk in self.blocks:
            x = blk(x)
        return torch.tanh(self.head(self.norm(x[:, 0])))
