"""Fixed clip-sampling protocol for feature-statistic evaluation.

Sampling happens in two stages: first a video is drawn uniformly, then
one random window of the requested length is drawn from it. Long source
videos therefore contribute no more often than short ones, unlike naive
pooling over all windows.
"""

from __future__ import annotations

from typing import List

import numpy as np

from ..errors import DataError
from .clips import VideoClip
from .datasets import DatasetHandle

_PROTOCOL_STREAM = 0x4556


def eval_clip_protocol(dataset: DatasetHandle, n_clips: int, length: int,
                       seed: int, cap_to_videos: bool = False) -> List[VideoClip]:
    """Draw evaluation clips under the video-first protocol.

    Returns exactly n_clips clips (videos repeat when the corpus is
    small); with cap_to_videos the count is capped at the number of
    eligible videos instead.
    """
    if n_clips < 1 or length < 1:
        raise DataError("n_clips and length must be positive")
    eligible = [i for i in range(dataset.num_videos)
                if dataset.video_frames(i) >= length]
    if not eligible:
        raise DataError(f"no video has at least {length} frames")
    n = min(n_clips, len(eligible)) if cap_to_videos else n_clips
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, _PROTOCOL_STREAM])))
    clips = []
    for _ in range(n):
        vi = eligible[int(rng.integers(len(eligible)))]
        max_start = dataset.video_frames(vi) - length
        start = int(rng.integers(max_start + 1))
        clips.append(dataset.video_clip(vi, start, length))
    return clips
