"""Triplane video autoencoder: encoder, decoder, and checkpoint IO.

The encoder composes a space-time backbone with three per-axis
projection heads; the decoder broadcasts the three planes into a latent
grid and runs the mirrored backbone. With use_projection=False the
encoder instead emits a tanh-bounded cubic latent of the same grid
geometry (a sanity configuration; the decoder is unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field
from typing import Optional, Tuple, Union

import torch
import torch.nn as nn

from ..checkpoint import (Checkpoint, load_checkpoint, load_state_dict_arrays,
                          save_checkpoint, state_dict_arrays)
from ..errors import CheckpointError, ConfigError, GeometryError
from ..data.clips import VideoClip
from .backbone import GridBackbone, VideoBackbone
from .projection import AxisProjector
from .triplane import (CubicLatent, Planes, TriplaneLatent, grid_from_planes)


@dataclass(frozen=True)
class AutoencoderConfig:
    clip_length: int                 # S
    height: int                      # H
    width: int                       # W
    downsample: int                  # d; H' = H/d, W' = W/d
    latent_channels: int             # C per plane
    patch_h: int = 4
    patch_w: int = 4
    patch_t: int = 1
    backbone_width: int = 128
    backbone_depth: int = 2
    backbone_heads: int = 4
    backbone_mlp_ratio: float = 2.0
    decoder_depth: Optional[int] = None
    proj_depth: int = 2
    proj_width: int = 96
    proj_heads: int = 4
    proj_mlp_width: int = 128
    use_projection: bool = True
    identity_attention: bool = False
    decoder_ladder_width: int = 32

    def __post_init__(self):
        if self.downsample < 2:
            raise ConfigError(f"downsample d={self.downsample} rejected; d must be > 1")
        if self.height % self.downsample or self.width % self.downsample:
            raise ConfigError(
                f"H={self.height}, W={self.width} must be divisible by d={self.downsample}")
        if self.patch_t != 1:
            raise ConfigError("temporal patch extent must be 1")
        if self.downsample % self.patch_h or self.downsample % self.patch_w:
            raise ConfigError(
                f"d={self.downsample} must factor as patch x pooling "
                f"(patch {self.patch_h}x{self.patch_w})")
        if self.clip_length < 1:
            raise ConfigError("clip_length must be positive")
        if self.backbone_width % self.backbone_heads:
            raise ConfigError("backbone width must be divisible by heads")
        if self.proj_width % self.proj_heads:
            raise ConfigError("projection width must be divisible by heads")

    @property
    def pool_h(self) -> int:
        return self.downsample // self.patch_h

    @property
    def pool_w(self) -> int:
        return self.downsample // self.patch_w

    @property
    def latent_h(self) -> int:
        return self.height // self.downsample

    @property
    def latent_w(self) -> int:
        return self.width // self.downsample

    @property
    def plane_shapes(self) -> Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]]:
        s, hp, wp = self.clip_length, self.latent_h, self.latent_w
        return ((hp, wp), (s, wp), (s, hp))

    @property
    def latent_scalars(self) -> int:
        s, hp, wp = self.clip_length, self.latent_h, self.latent_w
        if self.use_projection:
            return self.latent_channels * (hp * wp + s * wp + s * hp)
        return 3 * self.latent_channels * s * hp * wp

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderConfig":
        return cls(**d)


@dataclass
class FeatureGrid:
    """Backbone output u before projection: (C_u, S, H', W') per clip."""

    u: torch.Tensor

    def __post_init__(self):
        if self.u.ndim != 4:
            raise GeometryError(f"feature grid must be 4-d, got {tuple(self.u.shape)}")
        if not torch.isfinite(self.u).all():
            raise GeometryError("feature grid contains non-finite values")


class TriplaneEncoder(nn.Module):
    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        self.cfg = cfg
        mlp = int(cfg.backbone_width * cfg.backbone_mlp_ratio)
        self.backbone = VideoBackbone(
            cfg.clip_length, cfg.height, cfg.width, cfg.patch_h, cfg.patch_w,
            cfg.pool_h, cfg.pool_w, cfg.backbone_width, cfg.backbone_depth,
            cfg.backbone_heads, mlp, cfg.identity_attention)
        if cfg.use_projection:
            args = (cfg.backbone_width, cfg.latent_channels)
            kw = dict(depth=cfg.proj_depth, width=cfg.proj_width,
                      heads=cfg.proj_heads, mlp_hidden=cfg.proj_mlp_width)
            self.proj_s = AxisProjector(*args, seq_len=cfg.clip_length, **kw)
            self.proj_h = AxisProjector(*args, seq_len=cfg.latent_h, **kw)
            self.proj_w = AxisProjector(*args, seq_len=cfg.latent_w, **kw)
        else:
            self.cubic_head = nn.Linear(cfg.backbone_width, 3 * cfg.latent_channels)

    def feature_grid(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, S, H, W) -> u (B, C_u, S, H', W')."""
        self._check_geometry(x)
        return self.backbone(x)

    def _check_geometry(self, x: torch.Tensor) -> None:
        cfg = self.cfg
        want = (3, cfg.clip_length, cfg.height, cfg.width)
        if x.ndim != 5 or tuple(x.shape[1:]) != want:
            raise GeometryError(
                f"encoder expects (B, {', '.join(map(str, want))}), got {tuple(x.shape)}")

    def forward(self, x: torch.Tensor) -> Union[Planes, torch.Tensor]:
        u = self.feature_grid(x)
        b, d, s, hp, wp = u.shape
        tok = u.permute(0, 2, 3, 4, 1)                        # (B, S, H', W', D)
        if not self.cfg.use_projection:
            cubic = torch.tanh(self.cubic_head(tok))          # (B, S, H', W', 3C)
            return cubic.permute(0, 4, 1, 2, 3).contiguous()
        c = self.cfg.latent_channels
        seq_s = tok.permute(0, 2, 3, 1, 4).reshape(b * hp * wp, s, d)
        z_s = self.proj_s(seq_s).view(b, hp, wp, c).permute(0, 3, 1, 2)
        seq_h = tok.permute(0, 1, 3, 2, 4).reshape(b * s * wp, hp, d)
        z_h = self.proj_h(seq_h).view(b, s, wp, c).permute(0, 3, 1, 2)
        seq_w = tok.reshape(b * s * hp, wp, d)
        z_w = self.proj_w(seq_w).view(b, s, hp, c).permute(0, 3, 1, 2)
        return z_s.contiguous(), z_h.contiguous(), z_w.contiguous()


class TriplaneDecoder(nn.Module):
    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        self.cfg = cfg
        mlp = int(cfg.backbone_width * cfg.backbone_mlp_ratio)
        self.backbone = GridBackbone(
            3 * cfg.latent_channels, cfg.clip_length, cfg.latent_h, cfg.latent_w,
            cfg.patch_h, cfg.patch_w, cfg.pool_h, cfg.pool_w,
            cfg.backbone_width, cfg.decoder_depth or cfg.backbone_depth,
            cfg.backbone_heads, mlp, cfg.identity_attention,
            ladder_width=cfg.decoder_ladder_width)

    def forward(self, planes_or_grid: Union[Planes, torch.Tensor]) -> torch.Tensor:
        if isinstance(planes_or_grid, tuple):
            v = grid_from_planes(*planes_or_grid)
        else:
            v = planes_or_grid
        cfg = self.cfg
        want = (3 * cfg.latent_channels, cfg.clip_length, cfg.latent_h, cfg.latent_w)
        if v.ndim != 5 or tuple(v.shape[1:]) != want:
            raise GeometryError(
                f"decoder expects grid (B, {', '.join(map(str, want))}), got {tuple(v.shape)}")
        return self.backbone(v)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def build_autoencoder(cfg: AutoencoderConfig) -> Tuple[TriplaneEncoder, TriplaneDecoder]:
    """Construct the encoder/decoder pair for a validated config."""
    enc = TriplaneEncoder(cfg)
    dec = TriplaneDecoder(cfg)
    return enc, dec


def encode(encoder: TriplaneEncoder, x: VideoClip) -> Union[TriplaneLatent, CubicLatent]:
    """Encode one clip; output entries are strictly inside (-1, 1)."""
    with torch.no_grad():
        out = encoder(x.pixels[None])
    if isinstance(out, tuple):
        z = TriplaneLatent.from_planes(out)
        z.check_bounded()
        return z
    return CubicLatent(out[0])


def decode(decoder: TriplaneDecoder, z: Union[TriplaneLatent, CubicLatent]) -> VideoClip:
    """Decode a latent back to a clip of the configured geometry."""
    with torch.no_grad():
        if isinstance(z, CubicLatent):
            x = decoder(z.v[None])
        else:
            x = decoder(z.planes(batched=True))
    return VideoClip(x[0].clamp(-1.0, 1.0))


AE_CKPT_KIND = "pvdiff-autoencoder"


def save_autoencoder(path, encoder: TriplaneEncoder, decoder: TriplaneDecoder,
                     extra_meta: Optional[dict] = None,
                     extra_arrays: Optional[dict] = None):
    arrays = {}
    arrays.update(state_dict_arrays(encoder, "model/encoder/"))
    arrays.update(state_dict_arrays(decoder, "model/decoder/"))
    if extra_arrays:
        arrays.update(extra_arrays)
    meta = {"kind": AE_CKPT_KIND, "config": encoder.cfg.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    return save_checkpoint(path, meta, arrays)


def load_autoencoder(path) -> Tuple[TriplaneEncoder, TriplaneDecoder, AutoencoderConfig, Checkpoint]:
    ckpt = load_checkpoint(path)
    if ckpt.meta.get("kind") != AE_CKPT_KIND:
        raise CheckpointError(f"{path}: not an autoencoder checkpoint "
                              f"(kind={ckpt.meta.get('kind')!r})")
    cfg = AutoencoderConfig.from_dict(ckpt.meta["config"])
    enc, dec = build_autoencoder(cfg)
    load_state_dict_arrays(enc, ckpt, "model/encoder/")
    load_state_dict_arrays(dec, ckpt, "model/decoder/")
    enc.eval()
    dec.eval()
    return enc, dec, cfg, ckpt
