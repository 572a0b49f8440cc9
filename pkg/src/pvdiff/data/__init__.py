from .clips import ClipPair, VideoClip, center_crop_square, resize_frames
from .datasets import DatasetHandle, load_video_dataset, sample_clip_pair
from .protocol import eval_clip_protocol
from .synthetic import SyntheticSpec, bounce_path, generate_synthetic_dataset

__all__ = [
    "VideoClip",
    "ClipPair",
    "DatasetHandle",
    "SyntheticSpec",
    "bounce_path",
    "center_crop_square",
    "resize_frames",
    "load_video_dataset",
    "sample_clip_pair",
    "generate_synthetic_dataset",
    "eval_clip_protocol",
]
