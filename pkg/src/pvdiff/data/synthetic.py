"""Synthetic desk-scale video corpus: bouncing colored shapes.

Every video is a plain-colored background with one or more solid shapes
moving on straight lines and reflecting off the frame edges. Rendering
is antialiased and fully determined by (spec, video index), so the same
spec always reproduces bitwise-identical pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np
import torch

from ..errors import ConfigError, DataError

_VIDEO_STREAM = 0x5649  # rng stream tags, arbitrary but fixed
MANIFEST_KIND = "pvdiff-synthetic-v1"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the generated corpus.

    frames_per_video defaults to 2*clip_length so that every video
    supports consecutive-clip pair sampling.
    """

    count: int
    clip_length: int
    resolution: int
    seed: int
    frames_per_video: Optional[int] = None
    min_shapes: int = 1
    max_shapes: int = 2
    min_speed: float = 1.0
    max_speed: float = 3.0
    min_size_frac: float = 0.15
    max_size_frac: float = 0.3
    motion_floor: float = 1e-4
    integer_motion: bool = False   # snap starts/velocities to whole pixels

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("synthetic spec: count must be >= 1")
        if self.clip_length < 1 or self.resolution < 8:
            raise ConfigError("synthetic spec: clip_length >= 1 and resolution >= 8 required")
        if self.min_shapes < 1 or self.max_shapes < self.min_shapes:
            raise ConfigError("synthetic spec: need 1 <= min_shapes <= max_shapes")
        if self.min_speed < 0 or self.max_speed < self.min_speed:
            raise ConfigError("synthetic spec: need 0 <= min_speed <= max_speed")
        if not (0 < self.min_size_frac <= self.max_size_frac < 1):
            raise ConfigError("synthetic spec: need 0 < min_size_frac <= max_size_frac < 1")

    @property
    def n_frames(self) -> int:
        return self.frames_per_video if self.frames_per_video else 2 * self.clip_length


@dataclass
class ShapeInfo:
    kind: str                      # "square" | "circle"
    size: float                    # side length or diameter, pixels
    color: Tuple[float, float, float]
    start: Tuple[float, float]     # (y, x) of top-left corner at frame 0
    velocity: Tuple[float, float]  # (vy, vx), pixels/frame
    path: np.ndarray = field(repr=False, default=None)  # (n_frames, 2) corner positions


def bounce_path(start: float, velocity: float, size: float, extent: float,
                n_frames: int) -> np.ndarray:
    """Positions of a segment of length `size` bouncing inside [0, extent].

    Stepwise update: advance by the velocity, then reflect the overshoot
    at either wall and flip the velocity. Requires |velocity| <= extent -
    size so at most one reflection happens per frame.
    """
    limit = extent - size
    if limit < 0:
        raise ConfigError(f"shape of size {size} does not fit in extent {extent}")
    if abs(velocity) > limit and limit > 0:
        raise ConfigError(f"speed {velocity} exceeds travel range {limit}")
    pos = np.empty(n_frames, dtype=np.float64)
    p, v = float(start), float(velocity)
    if not (0 <= p <= limit):
        raise ConfigError(f"start {start} outside [0, {limit}]")
    pos[0] = p
    for i in range(1, n_frames):
        p = p + v
        if p < 0:
            p, v = -p, -v
        elif p > limit:
            p, v = 2 * limit - p, -v
        pos[i] = p
    return pos


def _draw_color(rng: np.random.Generator, contrast_to: np.ndarray) -> np.ndarray:
    for _ in range(32):
        c = rng.uniform(-0.9, 0.9, size=3)
        if np.abs(c - contrast_to).max() >= 0.5:
            return c
    # fall back to the complement, still inside the valid range
    return np.clip(-contrast_to, -0.9, 0.9)


def _coverage_square(ys: np.ndarray, xs: np.ndarray, y: float, x: float,
                     size: float) -> np.ndarray:
    cov_y = np.clip(np.minimum(y + size, ys + 1.0) - np.maximum(y, ys), 0.0, 1.0)
    cov_x = np.clip(np.minimum(x + size, xs + 1.0) - np.maximum(x, xs), 0.0, 1.0)
    return np.outer(cov_y, cov_x)


def _coverage_circle(ys: np.ndarray, xs: np.ndarray, y: float, x: float,
                     size: float) -> np.ndarray:
    r = size / 2.0
    cy, cx = y + r, x + r
    dist = np.sqrt((ys[:, None] + 0.5 - cy) ** 2 + (xs[None, :] + 0.5 - cx) ** 2)
    return np.clip(r + 0.5 - dist, 0.0, 1.0)


def render_video(spec: SyntheticSpec, index: int) -> Tuple[np.ndarray, List[ShapeInfo], np.ndarray]:
    """Render one video: (frames (T, 3, R, R) float32, shapes, background)."""
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([spec.seed, _VIDEO_STREAM, index])))
    res = spec.resolution
    n = spec.n_frames
    bg = rng.uniform(-0.7, 0.7, size=3)
    n_shapes = int(rng.integers(spec.min_shapes, spec.max_shapes + 1))
    ys = np.arange(res, dtype=np.float64)
    xs = np.arange(res, dtype=np.float64)

    shapes: List[ShapeInfo] = []
    frames = np.empty((n, 3, res, res), dtype=np.float32)
    frames[:] = bg.astype(np.float32)[None, :, None, None]
    for _ in range(n_shapes):
        kind = "square" if rng.random() < 0.5 else "circle"
        size = float(rng.uniform(spec.min_size_frac, spec.max_size_frac) * res)
        speeds = rng.uniform(spec.min_speed, spec.max_speed, size=2)
        signs = np.where(rng.random(2) < 0.5, -1.0, 1.0)
        vel = speeds * signs
        start = rng.uniform(0, res - size, size=2)
        if spec.integer_motion:
            size = float(round(size))
            vel = np.maximum(np.rint(np.abs(vel)), 1.0) * signs
            start = np.clip(np.rint(start), 0, res - size)
        color = _draw_color(rng, bg)
        path_y = bounce_path(start[0], vel[0], size, res, n)
        path_x = bounce_path(start[1], vel[1], size, res, n)
        path = np.stack([path_y, path_x], axis=1)
        shapes.append(ShapeInfo(kind=kind, size=size, color=tuple(color),
                                start=(start[0], start[1]),
                                velocity=(vel[0], vel[1]), path=path))
        cover_fn = _coverage_square if kind == "square" else _coverage_circle
        col = color.astype(np.float32)
        for t in range(n):
            cov = cover_fn(ys, xs, path[t, 0], path[t, 1], size).astype(np.float32)
            frames[t] = frames[t] * (1.0 - cov) + col[:, None, None] * cov
    return frames, shapes, bg


def motion_energy(frames: np.ndarray) -> float:
    """Mean squared per-frame difference over a (T, 3, H, W) window."""
    if frames.shape[0] < 2:
        return 0.0
    diff = np.diff(frames.astype(np.float64), axis=0)
    return float(np.mean(diff ** 2))


def generate_synthetic_dataset(spec: SyntheticSpec):
    """Materialize the corpus and wrap it in a DatasetHandle.

    Raises DataError if any aligned clip window falls below the motion
    floor (e.g. a zero-velocity spec produces static video).
    """
    from .datasets import ArrayVideoSource, DatasetHandle

    sources = []
    s = spec.clip_length
    for i in range(spec.count):
        frames, shapes, bg = render_video(spec, i)
        for start in range(0, spec.n_frames - s + 1, s):
            e = motion_energy(frames[start:start + s])
            if e < spec.motion_floor:
                raise DataError(
                    f"synthetic video {i}: clip window at frame {start} has motion "
                    f"energy {e:.3e} below floor {spec.motion_floor:.3e}")
        tensor = torch.from_numpy(np.ascontiguousarray(frames.transpose(1, 0, 2, 3)))
        src = ArrayVideoSource(uid=f"synthetic/{i:05d}", frames=tensor)
        src.shapes = shapes
        src.background = bg
        sources.append(src)
    return DatasetHandle(sources=sources, clip_length=s, resolution=spec.resolution,
                         seed=spec.seed, split="train",
                         descriptor=f"synthetic:count={spec.count}:seed={spec.seed}",
                         synthetic_spec=spec)


def spec_to_manifest(spec: SyntheticSpec) -> str:
    """Serialize a spec as the documented key-value manifest text."""
    lines = [f"kind: {MANIFEST_KIND}"]
    for key, val in asdict(spec).items():
        if val is None:
            continue
        lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"


def spec_from_manifest(text: str) -> SyntheticSpec:
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ConfigError(f"bad manifest line: {raw!r}")
        key, val = (part.strip() for part in line.split(":", 1))
        fields[key] = val
    if fields.pop("kind", None) != MANIFEST_KIND:
        raise ConfigError("manifest is not a synthetic dataset manifest")
    ints = {"count", "clip_length", "resolution", "seed", "frames_per_video",
            "min_shapes", "max_shapes"}
    bools = {"integer_motion"}
    kwargs = {}
    for key, val in fields.items():
        if key in ints:
            kwargs[key] = int(val)
        elif key in bools:
            kwargs[key] = val.strip().lower() in ("true", "1", "yes")
        else:
            kwargs[key] = float(val)
    return SyntheticSpec(**kwargs)
