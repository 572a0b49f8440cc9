"""Run configuration: YAML schema, preset inheritance, strict validation.

A config file is a nested mapping with optional `preset:` inheritance;
user keys are deep-merged over the preset. Unknown keys anywhere are
hard errors. The fully resolved config (defaults applied) is written
verbatim into the run directory before any compute starts.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, List, Mapping, Optional

import yaml

from .errors import ConfigError
from .models.autoencoder import AutoencoderConfig
from .diffusion.unet import DenoiserConfig
from .data.synthetic import SyntheticSpec

OUTPUT_ROOT_ENV = "PVDIFF_OUTPUT_ROOT"


@dataclass
class DataSection:
    kind: str = "synthetic"            # synthetic | videos
    count: int = 64
    clip_length: int = 8
    resolution: int = 64
    frames_per_video: Optional[int] = None
    synthetic_seed: int = 0
    min_shapes: int = 1
    max_shapes: int = 2
    min_speed: float = 1.0
    max_speed: float = 3.0
    integer_motion: bool = False
    root: Optional[str] = None
    split: str = "train"


@dataclass
class AutoencoderSection:
    downsample: int = 8
    latent_channels: int = 4
    patch_h: int = 8
    patch_w: int = 8
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


@dataclass
class LossSection:
    lambda_perceptual: float = 1.0
    lambda_gan_before: float = 0.0
    lambda_gan_after: float = 0.25
    gan_start_step: Optional[int] = None
    perceptual_seed: int = 17
    perceptual_channels: List[int] = field(default_factory=lambda: [8, 16, 32])
    disc_channels: List[int] = field(default_factory=lambda: [32, 64])


@dataclass
class AETrainSection:
    batch_size: int = 8
    lr: float = 1e-3
    steps: int = 500
    warmup_steps: int = 50
    lr_floor_frac: float = 0.05     # cosine-decay floor as a fraction of lr
    grad_clip: float = 1.0
    eval_every: int = 100
    eval_clips: int = 32
    patience: int = 3
    log_every: int = 10


@dataclass
class DiffusionSection:
    base_channels: int = 32
    channel_mult: List[int] = field(default_factory=lambda: [1, 2])
    num_res_blocks: int = 1
    attn_factors: List[int] = field(default_factory=lambda: [1, 2])
    num_heads: int = 4
    time_embed_dim: Optional[int] = None
    timesteps: int = 1000
    linear_start: float = 0.0015
    linear_end: float = 0.0195
    lam: float = 0.5
    joint_mode: str = "both_branches"
    batch_size: int = 8
    lr: float = 1e-4
    steps: int = 1000
    checkpoint_every: int = 500
    log_every: int = 20


@dataclass
class SamplerSection:
    mode: str = "ddim"
    steps_init: int = 100
    steps_cond: int = 50
    eta: float = 0.0
    clips: int = 1


@dataclass
class EvalSection:
    n_clips: int = 256
    protocol_seed: int = 0
    extractor_seed: int = 99
    extractor_channels: List[int] = field(default_factory=lambda: [12, 24, 48])


@dataclass
class RunConfig:
    run_name: str = "run"
    seed: int = 0
    output_root: str = "runs"
    data: DataSection = field(default_factory=DataSection)
    autoencoder: AutoencoderSection = field(default_factory=AutoencoderSection)
    losses: LossSection = field(default_factory=LossSection)
    ae_train: AETrainSection = field(default_factory=AETrainSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    evaluation: EvalSection = field(default_factory=EvalSection)

    # -- derived builders -----------------------------------------------------

    def autoencoder_config(self) -> AutoencoderConfig:
        a = self.autoencoder
        return AutoencoderConfig(
            clip_length=self.data.clip_length, height=self.data.resolution,
            width=self.data.resolution, downsample=a.downsample,
            latent_channels=a.latent_channels, patch_h=a.patch_h, patch_w=a.patch_w,
            patch_t=a.patch_t, backbone_width=a.backbone_width,
            backbone_depth=a.backbone_depth, backbone_heads=a.backbone_heads,
            backbone_mlp_ratio=a.backbone_mlp_ratio, decoder_depth=a.decoder_depth,
            proj_depth=a.proj_depth, proj_width=a.proj_width, proj_heads=a.proj_heads,
            proj_mlp_width=a.proj_mlp_width, use_projection=a.use_projection,
            identity_attention=a.identity_attention,
            decoder_ladder_width=a.decoder_ladder_width)

    def denoiser_config(self, ae_cfg: Optional[AutoencoderConfig] = None) -> DenoiserConfig:
        ae_cfg = ae_cfg or self.autoencoder_config()
        d = self.diffusion
        return DenoiserConfig(
            latent_channels=ae_cfg.latent_channels, clip_length=ae_cfg.clip_length,
            latent_h=ae_cfg.latent_h, latent_w=ae_cfg.latent_w,
            base_channels=d.base_channels, channel_mult=tuple(d.channel_mult),
            num_res_blocks=d.num_res_blocks, attn_factors=tuple(d.attn_factors),
            num_heads=d.num_heads, time_embed_dim=d.time_embed_dim)

    def synthetic_spec(self) -> SyntheticSpec:
        d = self.data
        if d.kind != "synthetic":
            raise ConfigError("data.kind is not synthetic")
        return SyntheticSpec(count=d.count, clip_length=d.clip_length,
                             resolution=d.resolution,
                             frames_per_video=d.frames_per_video,
                             seed=d.synthetic_seed, min_shapes=d.min_shapes,
                             max_shapes=d.max_shapes, min_speed=d.min_speed,
                             max_speed=d.max_speed,
                             integer_motion=d.integer_motion)

    def build_dataset(self):
        from .data.datasets import load_video_dataset
        from .data.synthetic import generate_synthetic_dataset

        if self.data.kind == "synthetic":
            return generate_synthetic_dataset(self.synthetic_spec())
        if self.data.kind == "videos":
            if not self.data.root:
                raise ConfigError("data.kind=videos requires data.root")
            return load_video_dataset(self.data.root, self.data.split,
                                      self.data.clip_length, self.data.resolution)
        raise ConfigError(f"unknown data.kind {self.data.kind!r}")

    def validate(self) -> "RunConfig":
        if self.data.kind not in ("synthetic", "videos"):
            raise ConfigError(f"unknown data.kind {self.data.kind!r}")
        if self.diffusion.joint_mode not in ("both_branches", "bernoulli"):
            raise ConfigError(f"diffusion.joint_mode invalid: {self.diffusion.joint_mode!r}")
        if not 0.0 < self.diffusion.lam < 1.0:
            raise ConfigError("diffusion.lam must lie in (0, 1)")
        ae_cfg = self.autoencoder_config()       # raises on bad geometry
        self.denoiser_config(ae_cfg)             # raises on bad stage geometry
        from .diffusion.schedule import make_linear_schedule
        make_linear_schedule(self.diffusion.timesteps, self.diffusion.linear_start,
                             self.diffusion.linear_end)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


_SECTIONS = {
    "data": DataSection,
    "autoencoder": AutoencoderSection,
    "losses": LossSection,
    "ae_train": AETrainSection,
    "diffusion": DiffusionSection,
    "sampler": SamplerSection,
    "evaluation": EvalSection,
}
_TOP_KEYS = {"run_name", "seed", "output_root"} | set(_SECTIONS)


def _deep_merge(base: dict, override: Mapping) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def _build_section(cls, payload: Mapping, path: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown config key(s) under '{path}': {sorted(unknown)}")
    return cls(**payload)


def config_from_dict(raw: Mapping[str, Any]) -> RunConfig:
    raw = dict(raw)
    preset_name = raw.pop("preset", None)
    if preset_name is not None:
        from .presets import get_preset
        raw = _deep_merge(get_preset(preset_name), raw)
        raw.pop("preset", None)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")
    kwargs: dict = {}
    for key in ("run_name", "seed", "output_root"):
        if key in raw:
            kwargs[key] = raw[key]
    for name, cls in _SECTIONS.items():
        payload = raw.get(name, {})
        if payload is None:
            payload = {}
        if not isinstance(payload, Mapping):
            raise ConfigError(f"config section '{name}' must be a mapping")
        kwargs[name] = _build_section(cls, payload, name)
    return RunConfig(**kwargs).validate()


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def resolve_output_root(cfg: RunConfig, override: Optional[str] = None) -> Path:
    root = override or os.environ.get(OUTPUT_ROOT_ENV) or cfg.output_root
    return Path(root)


def make_run_dir(cfg: RunConfig, override_root: Optional[str] = None,
                 run_name: Optional[str] = None) -> Path:
    root = resolve_output_root(cfg, override_root)
    run_dir = root / (run_name or cfg.run_name)
    if run_dir.exists() and any(run_dir.iterdir()):
        raise ConfigError(f"run directory already exists and is not empty: {run_dir}")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_resolved_config(cfg: RunConfig, run_dir: Path) -> Path:
    path = run_dir / "config.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=True)
    return path
