"""Frozen random feature pyramid used as the desk perceptual extractor.

A small convolutional pyramid with fixed, seeded weights. It is not a
pretrained perceptual network; it exists so the full objective runs
hermetically. A real perceptual backbone can be plugged in through the
same interface (descriptor -> module mapping frames to feature lists).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import List, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class PerceptualExtractorSpec:
    """Descriptor committed to checkpoints so the extractor is reproducible."""

    kind: str = "random-pyramid"
    seed: int = 17
    channels: Sequence[int] = (8, 16, 32)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PerceptualExtractorSpec":
        return cls(kind=d["kind"], seed=int(d["seed"]), channels=tuple(d["channels"]))


class FeaturePyramid(nn.Module):
    """Maps (B, 3, H, W) frames to a list of per-stage feature tensors."""

    def __init__(self, spec: PerceptualExtractorSpec):
        super().__init__()
        if spec.kind != "random-pyramid":
            raise ValueError(f"unknown perceptual extractor kind: {spec.kind}")
        self.spec = spec
        gen = torch.Generator().manual_seed(spec.seed)
        convs = []
        c_in = 3
        for c_out in spec.channels:
            conv = nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  * (2.0 / (c_in * 9)) ** 0.5)
                conv.bias.zero_()
            convs.append(conv)
            c_in = c_out
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, frames: torch.Tensor) -> List[torch.Tensor]:
        feats = []
        x = frames
        for conv in self.convs:
            x = F.gelu(conv(x))
            feats.append(x)
        return feats


def build_perceptual_extractor(spec: PerceptualExtractorSpec) -> FeaturePyramid:
    module = FeaturePyramid(spec)
    module.eval()
    return module
