"""Latent-budget accounting and the triplane-vs-cubic efficiency profiler.

Analytic part: per attention stage, the triplane token count
(H'W' + SW' + SH' at that stage's geometry) against a hypothetical cubic
token layout (S*H'*W', downsampled by the cube of the stage factor), plus
the implied quadratic self-attention cost ratio. Measured part:
wall-clock of a full triplane denoiser forward against a reference stack
of attention blocks of matched width operating on the cubic token sets.
The reference deliberately omits everything except attention, so the
comparison understates the cubic side's cost.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..models.autoencoder import AutoencoderConfig
from ..diffusion.unet import DenoiserBundle, DenoiserConfig


def latent_dim_accounting(cfg: AutoencoderConfig) -> int:
    """Total latent scalar count C * (H'W' + SW' + SH')."""
    s, hp, wp = cfg.clip_length, cfg.latent_h, cfg.latent_w
    return cfg.latent_channels * (hp * wp + s * wp + s * hp)


def triplane_token_count(s: int, hp: int, wp: int) -> int:
    return hp * wp + s * wp + s * hp


def cubic_token_count(s: int, hp: int, wp: int) -> int:
    return s * hp * wp


@dataclass
class StageTokenReport:
    factor: int
    channels: int
    triplane_tokens: int
    cubic_tokens: int
    token_ratio: float
    attention_flop_ratio: float   # quadratic cost ratio (ratio squared)
    has_attention: bool


@dataclass
class ProfileReport:
    stages: List[StageTokenReport]
    top_level_triplane_tokens: int
    top_level_cubic_tokens: int
    top_level_ratio: float
    triplane_forward_ms: Optional[float] = None
    cubic_attention_ms: Optional[float] = None
    measured_speedup: Optional[float] = None
    machine: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


class CubicAttentionReference(nn.Module):
    """Attention blocks over cubic token sets, mirroring the denoiser's
    attention stages at matched widths."""

    def __init__(self, den_cfg: DenoiserConfig):
        super().__init__()
        self.specs = []
        levels = len(den_cfg.channel_mult)
        stage_factors = [2 ** i for i in range(levels)]
        for i, f in enumerate(stage_factors):
            if f in den_cfg.attn_factors or i == levels - 1:
                ch = den_cfg.base_channels * den_cfg.channel_mult[i]
                s = den_cfg.clip_length // f
                hp = den_cfg.latent_h // f
                wp = den_cfg.latent_w // f
                self.specs.append((cubic_token_count(s, hp, wp), ch))
        self.norms = nn.ModuleList()
        self.qkvs = nn.ModuleList()
        self.projs = nn.ModuleList()
        self.heads = den_cfg.num_heads
        for _, ch in self.specs:
            self.norms.append(nn.LayerNorm(ch))
            self.qkvs.append(nn.Linear(ch, 3 * ch))
            self.projs.append(nn.Linear(ch, ch))

    def forward(self, batch: int = 1) -> torch.Tensor:
        out = torch.zeros(())
        for (n_tokens, ch), norm, qkv, proj in zip(self.specs, self.norms,
                                                   self.qkvs, self.projs):
            x = torch.randn(batch, n_tokens, ch)
            q, k, v = qkv(norm(x)).chunk(3, dim=-1)
            hd = ch // self.heads
            q = q.view(batch, n_tokens, self.heads, hd).transpose(1, 2)
            k = k.view(batch, n_tokens, self.heads, hd).transpose(1, 2)
            v = v.view(batch, n_tokens, self.heads, hd).transpose(1, 2)
            att = F.scaled_dot_product_attention(q, k, v)
            y = proj(att.transpose(1, 2).reshape(batch, n_tokens, ch))
            out = out + y.sum()
        return out


def _median_ms(fn, warmup: int = 2, trials: int = 7) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    times.sort()
    return times[len(times) // 2]


def profile_token_costs(ae_cfg: AutoencoderConfig, den_cfg: DenoiserConfig,
                        measure: bool = True, trials: int = 7) -> ProfileReport:
    s, hp, wp = ae_cfg.clip_length, ae_cfg.latent_h, ae_cfg.latent_w
    if (s, hp, wp) != (den_cfg.clip_length, den_cfg.latent_h, den_cfg.latent_w):
        raise ValueError("autoencoder and denoiser geometry differ")
    stages = []
    levels = len(den_cfg.channel_mult)
    for i in range(levels):
        f = 2 ** i
        tri = triplane_token_count(s // f, hp // f, wp // f)
        cub = cubic_token_count(s // f, hp // f, wp // f)
        ratio = cub / tri
        stages.append(StageTokenReport(
            factor=f,
            channels=den_cfg.base_channels * den_cfg.channel_mult[i],
            triplane_tokens=tri,
            cubic_tokens=cub,
            token_ratio=ratio,
            attention_flop_ratio=ratio ** 2,
            has_attention=(f in den_cfg.attn_factors or i == levels - 1)))
    top_tri = triplane_token_count(s, hp, wp)
    top_cub = cubic_token_count(s, hp, wp)
    report = ProfileReport(
        stages=stages,
        top_level_triplane_tokens=top_tri,
        top_level_cubic_tokens=top_cub,
        top_level_ratio=top_cub / top_tri,
        machine={
            "platform": platform.platform(),
            "processor": platform.processor() or "unknown",
            "python": platform.python_version(),
            "torch": torch.__version__,
            "threads": torch.get_num_threads(),
        })
    if measure:
        bundle = DenoiserBundle(den_cfg).eval()
        shapes = [(den_cfg.latent_channels, h, w) for h, w in den_cfg.plane_shapes(1)]
        planes = tuple(torch.randn(1, *sh) for sh in shapes)
        t = torch.tensor([1], dtype=torch.long)

        def run_triplane():
            with torch.no_grad():
                bundle(planes, None, t)

        reference = CubicAttentionReference(den_cfg).eval()

        def run_cubic():
            with torch.no_grad():
                reference(1)

        report.triplane_forward_ms = _median_ms(run_triplane, trials=trials)
        report.cubic_attention_ms = _median_ms(run_cubic, trials=trials)
        report.measured_speedup = report.cubic_attention_ms / report.triplane_forward_ms
    return report
