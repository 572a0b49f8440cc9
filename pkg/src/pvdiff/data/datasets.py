"""Dataset handles: video sources, clip windows, and pair sampling.

Clip enumeration uses non-overlapping aligned windows (stride = clip
length); pair sampling draws uniformly over the aligned pair offsets of a
single video. All randomness derives from the dataset seed, so iteration
order is a pure function of (source, split, seed).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..errors import DataError
from .clips import ClipPair, VideoClip, preprocess_frames, to_signed_range

log = logging.getLogger(__name__)

_PAIR_STREAM = 0x5052
_EPOCH_STREAM = 0x4550

VIDEO_EXTENSIONS = {".avi", ".mp4", ".mov", ".mkv", ".webm", ".mpg", ".mpeg"}
ARRAY_EXTENSIONS = {".npy", ".npz"}


class ArrayVideoSource:
    """A decoded video held in memory as a (3, T, H, W) float tensor."""

    def __init__(self, uid: str, frames: torch.Tensor, frame_rate: Optional[float] = None):
        if frames.ndim != 4 or frames.shape[0] != 3:
            raise DataError(f"source {uid}: expected (3, T, H, W), got {tuple(frames.shape)}")
        self.uid = uid
        self._frames = frames
        self.frame_rate = frame_rate

    @property
    def n_frames(self) -> int:
        return self._frames.shape[1]

    def frames(self, start: int, length: int) -> torch.Tensor:
        if start < 0 or start + length > self.n_frames:
            raise DataError(f"source {self.uid}: window [{start}, {start + length}) "
                            f"out of range ({self.n_frames} frames)")
        return self._frames[:, start:start + length]


def _decode_array_file(path: Path) -> torch.Tensor:
    """Read a .npy/.npz video: (T, H, W, 3) uint8 or (3, T, H, W) float."""
    if path.suffix == ".npz":
        with np.load(path) as z:
            if "frames" not in z:
                raise DataError(f"{path}: npz video must contain a 'frames' array")
            arr = z["frames"]
    else:
        arr = np.load(path)
    if arr.ndim != 4:
        raise DataError(f"{path}: expected a 4-d frame array, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        if arr.shape[-1] != 3:
            raise DataError(f"{path}: uint8 video must be (T, H, W, 3)")
        t = to_signed_range(torch.from_numpy(arr).permute(3, 0, 1, 2).contiguous())
    else:
        if arr.shape[0] != 3:
            raise DataError(f"{path}: float video must be (3, T, H, W)")
        t = torch.from_numpy(np.ascontiguousarray(arr)).float()
        if t.abs().max() > 1.0 + 1e-6:
            raise DataError(f"{path}: float video values outside [-1, 1]")
    return t


def _decode_container_file(path: Path) -> Tuple[torch.Tensor, Optional[float]]:
    """Decode a video container via OpenCV into (3, T, H, W) float [-1, 1]."""
    try:
        import cv2
    except ImportError as e:
        raise DataError(
            f"{path}: decoding video containers requires opencv-python-headless") from e
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DataError(f"{path}: decoder could not open file")
    fps = cap.get(cv2.CAP_PROP_FPS) or None
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(frame[:, :, ::-1].copy())  # BGR -> RGB
    cap.release()
    if not frames:
        raise DataError(f"{path}: no decodable frames")
    arr = np.stack(frames)  # (T, H, W, 3) uint8
    return to_signed_range(torch.from_numpy(arr).permute(3, 0, 1, 2).contiguous()), fps


@dataclass
class DatasetHandle:
    """Deterministic clip access over a list of video sources."""

    sources: List[ArrayVideoSource]
    clip_length: int
    resolution: int
    seed: int
    split: str = "train"
    descriptor: str = ""
    skipped: List[Tuple[str, str]] = field(default_factory=list)
    synthetic_spec: object = None

    def __post_init__(self):
        self._windows: List[Tuple[int, int]] = []
        for vi, src in enumerate(self.sources):
            for start in range(0, src.n_frames - self.clip_length + 1, self.clip_length):
                self._windows.append((vi, start))
        if not self._windows:
            raise DataError(
                f"dataset '{self.descriptor or self.split}' yields zero usable clips "
                f"(clip_length={self.clip_length}, videos={len(self.sources)})")

    # -- clip access ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._windows)

    @property
    def num_videos(self) -> int:
        return len(self.sources)

    def video_frames(self, video_index: int) -> int:
        return self.sources[video_index].n_frames

    def window(self, i: int) -> Tuple[int, int]:
        return self._windows[i]

    def clip(self, i: int) -> VideoClip:
        vi, start = self._windows[i]
        src = self.sources[vi]
        return VideoClip(src.frames(start, self.clip_length).clone(),
                         frame_rate=getattr(src, "frame_rate", None))

    def video_clip(self, video_index: int, start: int, length: Optional[int] = None) -> VideoClip:
        src = self.sources[video_index]
        return VideoClip(src.frames(start, length or self.clip_length).clone(),
                         frame_rate=getattr(src, "frame_rate", None))

    def epoch_order(self, epoch: int) -> np.ndarray:
        """Clip index permutation for one epoch; pure function of (seed, epoch)."""
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.seed, _EPOCH_STREAM, epoch])))
        return rng.permutation(len(self))

    # -- consecutive-pair sampling --------------------------------------------

    def pair_eligible_videos(self) -> List[int]:
        need = 2 * self.clip_length
        return [i for i, s in enumerate(self.sources) if s.n_frames >= need]

    def assert_pair_eligible(self) -> None:
        if not self.pair_eligible_videos():
            raise DataError(
                f"dataset '{self.descriptor or self.split}' has no video with at least "
                f"{2 * self.clip_length} frames; consecutive-clip pairs unavailable")


def sample_clip_pair(dataset: DatasetHandle, index: int, draw: int = 0) -> ClipPair:
    """Sample two consecutive clips from video `index`.

    The pair start offset is drawn uniformly over the aligned offsets
    {0, S, 2S, ...} that leave room for 2S frames; the draw is a pure
    function of (dataset seed, index, draw).
    """
    s = dataset.clip_length
    src = dataset.sources[index]
    if src.n_frames < 2 * s:
        raise DataError(f"video {index} has {src.n_frames} frames; "
                        f"pair sampling needs at least {2 * s}")
    offsets = range(0, src.n_frames - 2 * s + 1, s)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([dataset.seed, _PAIR_STREAM, index, draw])))
    start = int(rng.choice(np.fromiter(offsets, dtype=np.int64)))
    first = dataset.video_clip(index, start)
    second = dataset.video_clip(index, start + s)
    return ClipPair(first=first, second=second)


def load_video_dataset(root: str | Path, split: str, clip_length: int,
                       resolution: int) -> DatasetHandle:
    """Build a dataset from a directory of video files.

    Files under root/<split>/ are used when that directory exists,
    otherwise files directly under root. Every video is center-cropped to
    a square, resized, and rescaled to [-1, 1]; unreadable files are
    skipped with a warning and recorded on the handle.
    """
    root = Path(root)
    if resolution <= 0 or clip_length <= 0:
        raise DataError("resolution and clip_length must be positive")
    base = root / split if (root / split).is_dir() else root
    if not base.is_dir():
        raise DataError(f"dataset root not found: {base}")
    paths = sorted(p for p in base.iterdir()
                   if p.suffix.lower() in VIDEO_EXTENSIONS | ARRAY_EXTENSIONS)
    sources: List[ArrayVideoSource] = []
    skipped: List[Tuple[str, str]] = []
    for p in paths:
        try:
            if p.suffix.lower() in ARRAY_EXTENSIONS:
                frames, fps = _decode_array_file(p), None
            else:
                frames, fps = _decode_container_file(p)
            frames = preprocess_frames(frames, resolution)
            sources.append(ArrayVideoSource(uid=str(p), frames=frames, frame_rate=fps))
        except Exception as e:  # decode failures are non-fatal per file
            warnings.warn(f"skipping unreadable video {p}: {e}")
            skipped.append((str(p), str(e)))
    if not sources:
        raise DataError(f"no decodable videos under {base}")
    return DatasetHandle(sources=sources, clip_length=clip_length, resolution=resolution,
                         seed=0, split=split, descriptor=str(root), skipped=skipped)
