"""Transformer building blocks shared by the backbone and projections."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError


class SelfAttention(nn.Module):
    """Multi-head self-attention over (B, N, D) token sequences.

    With identity_attention=True every token attends only to itself:
    the output reduces to proj(value(x)). That mode turns the whole
    block into a strictly per-token map, used for locality smoke tests.
    """

    def __init__(self, dim: int, heads: int, identity_attention: bool = False):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"attention dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.identity_attention = identity_attention
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        if self.identity_attention:
            return self.proj(v)
        h = self.heads
        q = q.view(b, n, h, d // h).transpose(1, 2)
        k = k.view(b, n, h, d // h).transpose(1, 2)
        v = v.view(b, n, h, d // h).transpose(1, 2)
        out = F.scaled_dot_product_attention(q, k, v)
        out = out.transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Pre-norm attention + MLP residual block."""

    def __init__(self, dim: int, heads: int, mlp_hidden: int,
                 identity_attention: bool = False):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, identity_attention)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class SpaceTimeBlock(nn.Module):
    """Factorized space-time block: temporal attention, spatial attention, MLP.

    Operates on (B, S, N, D): temporal attention mixes across S at each
    spatial site, spatial attention mixes across N within each frame.
    """

    def __init__(self, dim: int, heads: int, mlp_hidden: int,
                 identity_attention: bool = False):
        super().__init__()
        self.norm_t = nn.LayerNorm(dim)
        self.attn_t = SelfAttention(dim, heads, identity_attention)
        self.norm_s = nn.LayerNorm(dim)
        self.attn_s = SelfAttention(dim, heads, identity_attention)
        self.norm_m = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, s, n, d = x.shape
        t_in = x.permute(0, 2, 1, 3).reshape(b * n, s, d)
        t_out = self.attn_t(self.norm_t(t_in)).reshape(b, n, s, d).permute(0, 2, 1, 3)
        x = x + t_out
        s_in = x.reshape(b * s, n, d)
        x = x + self.attn_s(self.norm_s(s_in)).reshape(b, s, n, d)
        return x + self.mlp(self.norm_m(x))
