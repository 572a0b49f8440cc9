"""Clip-level feature extractors behind a common interface.

The toy variant is a frozen, seeded random conv pyramid evaluated per
frame, pooled spatially per stage, then aggregated over time with both a
mean and a mean-absolute-difference term so that motion affects the
features. Numbers computed with it are extractor-relative and never
comparable across extractors. A pretrained clip network can be supplied
as a TorchScript module through the `external` variant.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..data.clips import VideoClip
from ..errors import ConfigError


@dataclass(frozen=True)
class FeatureExtractorSpec:
    kind: str = "toy"               # "toy" | "external"
    seed: int = 99
    channels: Sequence[int] = (12, 24, 48)
    path: Optional[str] = None      # external TorchScript module

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureExtractorSpec":
        return cls(kind=d.get("kind", "toy"), seed=int(d.get("seed", 99)),
                   channels=tuple(d.get("channels", (12, 24, 48))),
                   path=d.get("path"))


class ToyClipFeatures(nn.Module):
    """VideoClip batch (B, 3, S, H, W) -> feature matrix (B, D)."""

    def __init__(self, spec: FeatureExtractorSpec):
        super().__init__()
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

    @property
    def feature_dim(self) -> int:
        return 2 * sum(self.spec.channels)

    @torch.no_grad()
    def forward(self, clips: torch.Tensor) -> torch.Tensor:
        b, _, s, h, w = clips.shape
        x = clips.permute(0, 2, 1, 3, 4).reshape(b * s, 3, h, w)
        stage_feats = []
        for conv in self.convs:
            x = F.gelu(conv(x))
            pooled = x.mean(dim=(2, 3)).reshape(b, s, -1)    # (B, S, C)
            content = pooled.mean(dim=1)
            if s > 1:
                motion = pooled.diff(dim=1).abs().mean(dim=1)
            else:
                motion = torch.zeros_like(content)
            stage_feats.append(torch.cat([content, motion], dim=1))
        return torch.cat(stage_feats, dim=1)


def build_feature_extractor(spec: FeatureExtractorSpec) -> nn.Module:
    if spec.kind == "toy":
        module = ToyClipFeatures(spec)
    elif spec.kind == "external":
        if not spec.path:
            raise ConfigError("external feature extractor requires a module path")
        module = torch.jit.load(spec.path)
    else:
        raise ConfigError(f"unknown feature extractor kind {spec.kind!r}")
    module.eval()
    return module


def extract_features(extractor: nn.Module, clips: List[VideoClip],
                     batch_size: int = 16) -> torch.Tensor:
    """Stack clip tensors and run the extractor in batches -> (N, D)."""
    feats = []
    for i in range(0, len(clips), batch_size):
        chunk = torch.stack([c.pixels for c in clips[i:i + batch_size]])
        with torch.no_grad():
            feats.append(extractor(chunk))
    return torch.cat(feats, dim=0)
