"""Clip tensors and geometry preprocessing.

A clip is a float tensor of shape (3, S, H, W) with values in [-1, 1].
Mid-gray is exactly 0.0, so the all-zero clip doubles as the null
conditioning frame downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F

from ..errors import DataError


@dataclass
class VideoClip:
    """Fixed-length RGB clip with pixels in [-1, 1].

    pixels: float tensor (3, S, H, W).
    frame_rate: optional frames/second metadata; purely informational.
    """

    pixels: torch.Tensor
    frame_rate: Optional[float] = None

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, torch.Tensor):
            p = torch.as_tensor(p)
            object.__setattr__(self, "pixels", p)
        if p.ndim != 4 or p.shape[0] != 3:
            raise DataError(f"clip must have shape (3, S, H, W), got {tuple(p.shape)}")
        if min(p.shape[1:]) < 1:
            raise DataError(f"clip dims must be positive, got {tuple(p.shape)}")
        if not torch.isfinite(p).all():
            raise DataError("clip contains non-finite values")
        lo, hi = p.min().item(), p.max().item()
        if lo < -1.0 - 1e-6 or hi > 1.0 + 1e-6:
            raise DataError(f"clip values outside [-1, 1]: min={lo:.4f} max={hi:.4f}")

    @property
    def num_frames(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[2]

    @property
    def width(self) -> int:
        return self.pixels.shape[3]

    def frame(self, s: int) -> torch.Tensor:
        return self.pixels[:, s]


@dataclass
class ClipPair:
    """Two clips where `second` immediately follows `first` in the source."""

    first: VideoClip
    second: VideoClip

    def __post_init__(self):
        a, b = self.first.pixels, self.second.pixels
        if a.shape != b.shape:
            raise DataError(f"clip pair shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def center_crop_square(frames: torch.Tensor) -> torch.Tensor:
    """Center-crop (..., H, W) frames to the largest centered square."""
    h, w = frames.shape[-2:]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return frames[..., top:top + side, left:left + side]


def resize_frames(frames: torch.Tensor, resolution: int) -> torch.Tensor:
    """Bilinear antialiased resize of (C, T, H, W) frames to a square resolution."""
    c, t, h, w = frames.shape
    if (h, w) == (resolution, resolution):
        return frames
    flat = frames.permute(1, 0, 2, 3)  # (T, C, H, W)
    out = F.interpolate(flat, size=(resolution, resolution), mode="bilinear",
                        align_corners=False, antialias=True)
    return out.permute(1, 0, 2, 3).contiguous()


def to_signed_range(frames_u8: torch.Tensor) -> torch.Tensor:
    """Map uint8 [0, 255] frames to float32 [-1, 1]."""
    return frames_u8.to(torch.float32) / 127.5 - 1.0


def preprocess_frames(frames: torch.Tensor, resolution: int) -> torch.Tensor:
    """Center-crop to square, resize, and clamp to the valid range.

    Input (C, T, H, W) float in [-1, 1]; interpolation can overshoot
    slightly, hence the final clamp.
    """
    out = resize_frames(center_crop_square(frames), resolution)
    return out.clamp_(-1.0, 1.0)
