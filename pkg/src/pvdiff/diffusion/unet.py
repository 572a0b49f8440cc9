"""Triplane denoiser: one shared 2D U-Net over all three planes, joined
by cross-plane attention.

The convolutional trunk is applied with literally the same parameters to
the content plane and both motion planes; at configured downsampling
factors, tokens from all three planes' feature maps enter one joint
self-attention (with per-plane positional and plane-identity
embeddings). Conditioning is channel-wise concatenation of the
conditioning planes; the null condition is the all-zero planes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, GeometryError
from .schedule import NoiseSchedule

Planes = Tuple[torch.Tensor, torch.Tensor, torch.Tensor]


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int            # C per plane
    clip_length: int                # S
    latent_h: int                   # H'
    latent_w: int                   # W'
    base_channels: int = 32
    channel_mult: Sequence[int] = (1, 2)
    num_res_blocks: int = 1
    attn_factors: Sequence[int] = (1, 2)
    num_heads: int = 4
    time_embed_dim: Optional[int] = None

    def __post_init__(self):
        levels = len(self.channel_mult)
        if levels < 1:
            raise ConfigError("channel_mult must be non-empty")
        for i in range(levels - 1):
            f = 2 ** i
            for (a, b) in self.plane_shapes(f):
                if a % 2 or b % 2:
                    raise ConfigError(
                        f"plane extents at factor {f} must be even to downsample "
                        f"(got {a}x{b}); adjust S/H'/W' or channel_mult depth")
        valid = {2 ** i for i in range(levels)}
        for f in self.attn_factors:
            if f not in valid:
                raise ConfigError(f"attention factor {f} is not a stage factor {sorted(valid)}")
        for m in self.channel_mult:
            ch = self.base_channels * m
            if ch % self.num_heads:
                raise ConfigError(f"stage width {ch} not divisible by heads {self.num_heads}")

    def plane_shapes(self, factor: int = 1) -> Tuple[Tuple[int, int], ...]:
        s = self.clip_length // factor
        hp = self.latent_h // factor
        wp = self.latent_w // factor
        return ((hp, wp), (s, wp), (s, hp))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_mult"] = list(self.channel_mult)
        d["attn_factors"] = list(self.attn_factors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["channel_mult"] = tuple(d["channel_mult"])
        d["attn_factors"] = tuple(d["attn_factors"])
        return cls(**d)


def timestep_embedding(t: torch.Tensor, dim: int, dtype: torch.dtype,
                       max_period: float = 10000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) *
                      torch.arange(half, dtype=torch.float64, device=t.device) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, emb.new_zeros(emb.shape[0], 1)], dim=-1)
    return emb.to(dtype)


def _groups(c: int) -> int:
    for g in (8, 4, 2, 1):
        if c % g == 0:
            return g
    return 1


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, temb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.temb_proj = nn.Linear(temb_dim, c_out)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class CrossPlaneAttention(nn.Module):
    """Joint self-attention over the union of the three planes' tokens."""

    def __init__(self, channels: int, heads: int,
                 plane_shapes: Tuple[Tuple[int, int], ...]):
        super().__init__()
        if channels % heads:
            raise ConfigError(f"attention channels {channels} not divisible by {heads}")
        self.channels = channels
        self.heads = heads
        self.plane_shapes = plane_shapes
        self.tokens_per_plane = [h * w for h, w in plane_shapes]
        self.total_tokens = sum(self.tokens_per_plane)
        self.norm = nn.GroupNorm(_groups(channels), channels)
        self.plane_embed = nn.Parameter(torch.zeros(3, channels))
        self.pos_embed = nn.ParameterList([
            nn.Parameter(torch.zeros(1, n, channels)) for n in self.tokens_per_plane])
        for p in self.pos_embed:
            nn.init.trunc_normal_(p, std=0.02)
        nn.init.trunc_normal_(self.plane_embed, std=0.02)
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, planes: List[torch.Tensor]) -> List[torch.Tensor]:
        b = planes[0].shape[0]
        toks = []
        for i, p in enumerate(planes):
            t = self.norm(p).flatten(2).transpose(1, 2)
            toks.append(t + self.pos_embed[i] + self.plane_embed[i])
        joint = torch.cat(toks, dim=1)
        n = joint.shape[1]
        q, k, v = self.qkv(joint).chunk(3, dim=-1)
        hd = self.channels // self.heads
        q = q.view(b, n, self.heads, hd).transpose(1, 2)
        k = k.view(b, n, self.heads, hd).transpose(1, 2)
        v = v.view(b, n, self.heads, hd).transpose(1, 2)
        out = F.scaled_dot_product_attention(q, k, v)
        out = self.proj(out.transpose(1, 2).reshape(b, n, self.channels))
        outs = out.split(self.tokens_per_plane, dim=1)
        result = []
        for p, o, (h, w) in zip(planes, outs, self.plane_shapes):
            result.append(p + o.transpose(1, 2).reshape(b, self.channels, h, w))
        return result


class _PlaneConv(nn.Module):
    """One conv applied with shared weights to every plane tensor."""

    def __init__(self, conv: nn.Module):
        super().__init__()
        self.conv = conv

    def forward(self, planes: List[torch.Tensor]) -> List[torch.Tensor]:
        return [self.conv(p) for p in planes]


class _Level(nn.Module):
    def __init__(self):
        super().__init__()
        self.res = nn.ModuleList()
        self.attn = nn.ModuleList()
        self.resample: Optional[nn.Module] = None


class DenoiserBundle(nn.Module):
    """Shared-trunk triplane noise predictor epsilon(z_t, cond, t)."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        base = cfg.base_channels
        temb_dim = cfg.time_embed_dim or 4 * base
        self.temb_dim = temb_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(base, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim))
        self.conv_in = nn.Conv2d(2 * cfg.latent_channels, base, 3, padding=1)

        levels = len(cfg.channel_mult)
        chans = [base * m for m in cfg.channel_mult]
        self.down_levels = nn.ModuleList()
        skip_chans = [base]
        ch = base
        for i in range(levels):
            level = _Level()
            f = 2 ** i
            for _ in range(cfg.num_res_blocks):
                level.res.append(ResBlock(ch, chans[i], temb_dim))
                ch = chans[i]
                level.attn.append(self._maybe_attn(f, ch))
                skip_chans.append(ch)
            if i < levels - 1:
                level.resample = _PlaneConv(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
                skip_chans.append(ch)
            self.down_levels.append(level)

        self.mid_res1 = ResBlock(ch, ch, temb_dim)
        self.mid_attn = self._maybe_attn(2 ** (levels - 1), ch, force=True)
        self.mid_res2 = ResBlock(ch, ch, temb_dim)

        self.up_levels = nn.ModuleList()
        for i in reversed(range(levels)):
            level = _Level()
            f = 2 ** i
            for _ in range(cfg.num_res_blocks + 1):
                level.res.append(ResBlock(ch + skip_chans.pop(), chans[i], temb_dim))
                ch = chans[i]
                level.attn.append(self._maybe_attn(f, ch))
            if i > 0:
                level.resample = _PlaneConv(nn.Conv2d(ch, ch, 3, padding=1))
            self.up_levels.append(level)

        self.out_norm = nn.GroupNorm(_groups(base), base)
        self.out_conv = nn.Conv2d(base, cfg.latent_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def _maybe_attn(self, factor: int, ch: int, force: bool = False) -> nn.Module:
        if force or factor in self.cfg.attn_factors:
            return CrossPlaneAttention(ch, self.cfg.num_heads, self.cfg.plane_shapes(factor))
        return nn.Identity()

    def _check_planes(self, planes: Planes, name: str) -> None:
        shapes = self.cfg.plane_shapes(1)
        if len(planes) != 3:
            raise GeometryError(f"{name}: expected 3 planes")
        for p, (h, w) in zip(planes, shapes):
            want = (self.cfg.latent_channels, h, w)
            if p.ndim != 4 or tuple(p.shape[1:]) != want:
                raise GeometryError(
                    f"{name}: expected (B, {', '.join(map(str, want))}), got {tuple(p.shape)}")

    def forward(self, z_t: Planes, cond: Optional[Planes], t: torch.Tensor) -> Planes:
        self._check_planes(z_t, "z_t")
        if cond is None:
            cond = tuple(torch.zeros_like(p) for p in z_t)
        else:
            self._check_planes(cond, "cond")
        if not isinstance(t, torch.Tensor):
            t = torch.tensor([t], dtype=torch.long, device=z_t[0].device)
        if t.ndim == 0:
            t = t[None]
        b = z_t[0].shape[0]
        if t.shape[0] == 1 and b > 1:
            t = t.expand(b)
        if t.min() < 1:
            raise ConfigError("timesteps are 1-indexed; got t < 1")
        dtype = self.conv_in.weight.dtype
        temb = self.time_mlp(timestep_embedding(t, self.cfg.base_channels, dtype))

        planes = [self.conv_in(torch.cat([z, c], dim=1)) for z, c in zip(z_t, cond)]
        skips = [planes]
        for level in self.down_levels:
            for res, attn in zip(level.res, level.attn):
                planes = [res(p, temb) for p in planes]
                planes = attn(planes)
                skips.append(planes)
            if level.resample is not None:
                planes = level.resample(planes)
                skips.append(planes)

        planes = [self.mid_res1(p, temb) for p in planes]
        planes = self.mid_attn(planes)
        planes = [self.mid_res2(p, temb) for p in planes]

        for level in self.up_levels:
            for res, attn in zip(level.res, level.attn):
                skip = skips.pop()
                planes = [res(torch.cat([p, s], dim=1), temb)
                          for p, s in zip(planes, skip)]
                planes = attn(planes)
            if level.resample is not None:
                planes = [F.interpolate(p, scale_factor=2, mode="nearest") for p in planes]
                planes = level.resample(planes)

        out = [self.out_conv(F.silu(self.out_norm(p))) for p in planes]
        return tuple(out)

    def attention_modules(self) -> List[CrossPlaneAttention]:
        mods = [m for m in self.modules() if isinstance(m, CrossPlaneAttention)]
        return mods


def denoise(bundle: DenoiserBundle, z_t: Planes, cond: Optional[Planes],
            t, schedule: Optional[NoiseSchedule] = None) -> Planes:
    """Predict the injected noise for (possibly batched) planes at step t."""
    if schedule is not None:
        tt = t if isinstance(t, torch.Tensor) else torch.tensor([t])
        if tt.min() < 1 or tt.max() > schedule.T:
            raise ConfigError(f"timestep outside 1..{schedule.T}")
    return bundle(z_t, cond, t)
