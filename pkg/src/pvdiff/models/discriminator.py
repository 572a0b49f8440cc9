"""3D-convolutional video critic with feature taps for feature matching."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import List, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: Sequence[int] = (32, 64, 128)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorConfig":
        return cls(channels=tuple(d["channels"]))


class ClipDiscriminator(nn.Module):
    """One realness scalar per clip; exposes intermediate feature maps."""

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        layers = []
        c_in = 3
        for i, c_out in enumerate(cfg.channels):
            stride = (1, 2, 2) if i == 0 else (2, 2, 2)
            layers.append(nn.Conv3d(c_in, c_out, kernel_size=3, stride=stride, padding=1))
            c_in = c_out
        self.convs = nn.ModuleList(layers)
        self.head = nn.Conv3d(c_in, 1, kernel_size=1)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        feats = []
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
            feats.append(h)
        score = self.head(h).mean(dim=(1, 2, 3, 4))
        return score, feats
