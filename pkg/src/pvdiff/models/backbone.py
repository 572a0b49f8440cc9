"""Factorized space-time transformer backbone (video-transformer style).

The encoder side tokenizes frames with a patch convolution, optionally
pools by an extra integer factor so the total spatial downsampling
equals the configured d, and runs factorized temporal/spatial attention
blocks. The decoder side mirrors it: blocks at the latent grid
resolution, an unpooling transpose convolution, and a per-token linear
patch head.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import SpaceTimeBlock


class VideoBackbone(nn.Module):
    """Video -> feature grid u of shape (B, width, S, H', W')."""

    def __init__(self, clip_length: int, height: int, width_px: int,
                 patch_h: int, patch_w: int, pool_h: int, pool_w: int,
                 width: int, depth: int, heads: int, mlp_hidden: int,
                 identity_attention: bool = False):
        super().__init__()
        self.clip_length = clip_length
        self.grid_h = height // (patch_h * pool_h)
        self.grid_w = width_px // (patch_w * pool_w)
        self.width = width
        self.patch = nn.Conv2d(3, width, kernel_size=(patch_h, patch_w),
                               stride=(patch_h, patch_w))
        self.pool = None
        if pool_h > 1 or pool_w > 1:
            self.pool = nn.Conv2d(width, width, kernel_size=(pool_h, pool_w),
                                  stride=(pool_h, pool_w))
        self.pos_spatial = nn.Parameter(torch.zeros(1, 1, self.grid_h * self.grid_w, width))
        self.pos_temporal = nn.Parameter(torch.zeros(1, clip_length, 1, width))
        nn.init.trunc_normal_(self.pos_spatial, std=0.02)
        nn.init.trunc_normal_(self.pos_temporal, std=0.02)
        self.blocks = nn.ModuleList([
            SpaceTimeBlock(width, heads, mlp_hidden, identity_attention)
            for _ in range(depth)])
        self.norm = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, _, s, h, w = x.shape
        flat = x.permute(0, 2, 1, 3, 4).reshape(b * s, 3, h, w)
        tok = self.patch(flat)
        if self.pool is not None:
            tok = self.pool(tok)
        gh, gw = tok.shape[-2:]
        tok = tok.flatten(2).transpose(1, 2)                  # (B*S, N, D)
        tok = tok.reshape(b, s, gh * gw, self.width)
        tok = tok + self.pos_spatial + self.pos_temporal
        for blk in self.blocks:
            tok = blk(tok)
        tok = self.norm(tok)
        u = tok.reshape(b, s, gh, gw, self.width).permute(0, 4, 1, 2, 3)
        return u.contiguous()


def _gn(ch: int) -> nn.GroupNorm:
    for g in (8, 4, 2, 1):
        if ch % g == 0:
            return nn.GroupNorm(g, ch)
    return nn.GroupNorm(1, ch)


class UpsampleLadder(nn.Module):
    """Inverts the patch/pool downsampling of the encoder.

    Each token expands linearly into an (up/2 x up/2) block of subpixel
    features (no information squeeze), then a conv refinement and one
    final nearest x2 + conv stage paint the remaining factor. An odd
    upsampling factor falls back to a transpose convolution.
    """

    def __init__(self, width: int, up_h: int, up_w: int, subpixel_dim: int = 32):
        super().__init__()
        self.e_h = up_h // 2 if up_h % 2 == 0 else 1
        self.e_w = up_w // 2 if up_w % 2 == 0 else 1
        rem_h, rem_w = up_h // self.e_h, up_w // self.e_w
        ch = subpixel_dim
        self.expand = nn.Linear(width, self.e_h * self.e_w * ch)
        self.refine_norm = _gn(ch)
        self.refine = nn.Conv2d(ch, ch, 3, padding=1)
        if (rem_h, rem_w) == (2, 2):
            self.up = None
            self.up_conv = nn.Conv2d(ch, ch // 2, 3, padding=1)
        else:
            self.up = nn.ConvTranspose2d(ch, ch // 2, kernel_size=(rem_h, rem_w),
                                         stride=(rem_h, rem_w))
            self.up_conv = None
        ch = ch // 2
        self.out_norm = _gn(ch)
        self.out = nn.Conv2d(ch, 3, 3, padding=1)

    def forward(self, grid: torch.Tensor) -> torch.Tensor:
        b, d, gh, gw = grid.shape
        sub = self.expand(grid.permute(0, 2, 3, 1))
        sub = sub.reshape(b, gh, gw, self.e_h, self.e_w, -1)
        sub = sub.permute(0, 5, 1, 3, 2, 4)
        h = sub.reshape(b, -1, gh * self.e_h, gw * self.e_w)
        h = h + self.refine(F.gelu(self.refine_norm(h)))
        if self.up is not None:
            h = self.up(h)
        else:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = self.up_conv(h)
        return self.out(F.gelu(self.out_norm(h)))


class GridBackbone(nn.Module):
    """Latent grid (B, 3C, S, H', W') -> video (B, 3, S, H, W) in [-1, 1]."""

    def __init__(self, grid_channels: int, clip_length: int, grid_h: int, grid_w: int,
                 patch_h: int, patch_w: int, pool_h: int, pool_w: int,
                 width: int, depth: int, heads: int, mlp_hidden: int,
                 identity_attention: bool = False, ladder_width: int = 64):
        super().__init__()
        self.grid_h, self.grid_w = grid_h, grid_w
        self.width = width
        self.embed = nn.Linear(grid_channels, width)
        self.pos_spatial = nn.Parameter(torch.zeros(1, 1, grid_h * grid_w, width))
        self.pos_temporal = nn.Parameter(torch.zeros(1, clip_length, 1, width))
        nn.init.trunc_normal_(self.pos_spatial, std=0.02)
        nn.init.trunc_normal_(self.pos_temporal, std=0.02)
        self.blocks = nn.ModuleList([
            SpaceTimeBlock(width, heads, mlp_hidden, identity_attention)
            for _ in range(depth)])
        self.norm = nn.LayerNorm(width)
        self.ladder = UpsampleLadder(width, patch_h * pool_h, patch_w * pool_w,
                                     subpixel_dim=ladder_width)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        b, c, s, gh, gw = v.shape
        tok = v.permute(0, 2, 3, 4, 1).reshape(b, s, gh * gw, c)
        tok = self.embed(tok) + self.pos_spatial + self.pos_temporal
        for blk in self.blocks:
            tok = blk(tok)
        tok = self.norm(tok)
        grid = tok.reshape(b * s, gh, gw, self.width).permute(0, 3, 1, 2)
        pix = torch.tanh(self.ladder(grid))
        return pix.reshape(b, s, 3, pix.shape[-2], pix.shape[-1]).permute(0, 2, 1, 3, 4)
