"""Frame and container output for sampled videos."""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import List

import numpy as np
import torch
from PIL import Image


def frames_to_uint8(frames: torch.Tensor) -> np.ndarray:
    """(3, T, H, W) float [-1, 1] -> (T, H, W, 3) uint8."""
    arr = frames.clamp(-1.0, 1.0).add(1.0).mul(127.5).round().to(torch.uint8)
    return arr.permute(1, 2, 3, 0).numpy()


def write_frame_sequence(frames: torch.Tensor, out_dir: str | Path) -> List[Path]:
    """Dump lossless PNG frames named frame_%06d.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames_to_uint8(frames)):
        path = out_dir / f"frame_{i:06d}.png"
        Image.fromarray(frame).save(path, format="PNG")
        paths.append(path)
    return paths


def write_container(frames: torch.Tensor, path: str | Path,
                    fps: float = 10.0) -> bool:
    """Best-effort encode through the host codec; returns False on failure."""
    path = Path(path)
    try:
        import cv2
    except ImportError:
        warnings.warn("container output skipped: opencv-python-headless not installed")
        return False
    arr = frames_to_uint8(frames)
    h, w = arr.shape[1:3]
    fourcc = cv2.VideoWriter_fourcc(*("MJPG" if path.suffix == ".avi" else "mp4v"))
    writer = cv2.VideoWriter(str(path), fourcc, fps, (w, h))
    if not writer.isOpened():
        warnings.warn(f"container output skipped: encoder rejected {path}")
        return False
    for frame in arr:
        writer.write(frame[:, :, ::-1])  # RGB -> BGR
    writer.release()
    return True
