"""Named configuration presets.

`pvdm-s` / `pvdm-l` carry the full-scale published hyperparameters
(256x256, 16-frame clips; projection transformers with 4 layers, 4
heads, hidden 384, MLP 512; U-Net base channel 128 / 256, channel
multipliers [1,2,4], 2 residual blocks, 8 heads, attention at stage
factors [1,2,4]; linear schedule 0.0015 -> 0.0195 over 1000 steps;
autoencoder batch 24 at lr 1e-4, diffusion batch 64 at lr 1e-4). The
backbone depth/width of the video transformer are not published; the
values here are reasonable fill-ins, flagged as such.

`desk-*` presets are small configurations sized for CPU-scale runs and
make no fidelity claim.
"""

from __future__ import annotations

import copy

from .errors import ConfigError

_PVDM_COMMON = {
    "data": {
        "kind": "videos",
        "clip_length": 16,
        "resolution": 256,
    },
    "autoencoder": {
        "downsample": 8,
        "latent_channels": 4,
        "patch_h": 4,
        "patch_w": 4,
        "patch_t": 1,
        # backbone size unpublished; chosen, not reproduced
        "backbone_width": 384,
        "backbone_depth": 8,
        "backbone_heads": 8,
        "backbone_mlp_ratio": 4.0,
        "proj_depth": 4,
        "proj_width": 384,
        "proj_heads": 4,
        "proj_mlp_width": 512,
    },
    "losses": {
        "lambda_perceptual": 1.0,
        "lambda_gan_after": 0.25,
        "gan_start_step": 50000,
        "disc_channels": [64, 128, 256],
    },
    "ae_train": {
        "batch_size": 24,
        "lr": 1.0e-4,
        "steps": 400000,
        "eval_every": 5000,
        "eval_clips": 2048,
    },
    "diffusion": {
        "channel_mult": [1, 2, 4],
        "num_res_blocks": 2,
        "attn_factors": [1, 2, 4],
        "num_heads": 8,
        "timesteps": 1000,
        "linear_start": 0.0015,
        "linear_end": 0.0195,
        "batch_size": 64,
        "lr": 1.0e-4,
    },
    "evaluation": {
        "n_clips": 2048,
    },
}

_DESK_TINY = {
    "data": {
        "kind": "synthetic",
        "count": 16,
        "clip_length": 8,
        "resolution": 64,
    },
    "autoencoder": {
        "downsample": 8,
        "latent_channels": 4,
        "patch_h": 8,
        "patch_w": 8,
        "backbone_width": 96,
        "backbone_depth": 1,
        "backbone_heads": 4,
        "backbone_mlp_ratio": 2.0,
        "proj_depth": 1,
        "proj_width": 48,
        "proj_heads": 4,
        "proj_mlp_width": 64,
    },
    "losses": {
        "lambda_perceptual": 0.25,
        "gan_start_step": None,
        "perceptual_channels": [8, 16, 32],
        "disc_channels": [16, 32],
    },
    "ae_train": {
        "batch_size": 8,
        "lr": 2.0e-3,
        "steps": 200,
        "eval_every": 100,
        "eval_clips": 16,
    },
    "diffusion": {
        "base_channels": 24,
        "channel_mult": [1, 2],
        "num_res_blocks": 1,
        "attn_factors": [1, 2],
        "num_heads": 4,
        "timesteps": 1000,
        "lam": 0.5,
        "batch_size": 8,
        "steps": 300,
        "lr": 3.0e-4,
    },
    "sampler": {
        "mode": "ddim",
        "steps_init": 50,
        "steps_cond": 25,
    },
    "evaluation": {
        "n_clips": 32,
        "extractor_channels": [12, 24, 48],
    },
}

_DESK_OVERFIT = {
    "data": {
        # 32 videos of 2S frames = 64 non-overlapping training clips
        "kind": "synthetic",
        "count": 32,
        "clip_length": 8,
        "resolution": 64,
        "max_speed": 2.0,
        "integer_motion": True,
    },
    "autoencoder": {
        "downsample": 8,
        "latent_channels": 4,
        "patch_h": 8,
        "patch_w": 8,
        "backbone_width": 192,
        "backbone_depth": 2,
        "decoder_depth": 2,
        "backbone_heads": 4,
        "backbone_mlp_ratio": 2.0,
        "proj_depth": 1,
        "proj_width": 64,
        "proj_heads": 4,
        "proj_mlp_width": 96,
    },
    "losses": {
        "lambda_perceptual": 0.2,
        "gan_start_step": None,
        "perceptual_channels": [8, 16, 32],
        "disc_channels": [16, 32],
    },
    "ae_train": {
        "batch_size": 8,
        "lr": 2.0e-3,
        "steps": 900,
        "eval_every": 150,
        "eval_clips": 24,
        "patience": 5,
    },
    "diffusion": {
        "base_channels": 32,
        "channel_mult": [1, 2],
        "num_res_blocks": 1,
        "attn_factors": [1, 2],
        "num_heads": 4,
        "timesteps": 1000,
        "lam": 0.5,
        "joint_mode": "bernoulli",
        "batch_size": 16,
        "steps": 3000,
        "lr": 1.0e-3,
    },
    "sampler": {
        "mode": "ddim",
        "steps_init": 100,
        "steps_cond": 50,
    },
    "evaluation": {
        "n_clips": 48,
    },
}

PRESETS = {
    "pvdm-s": {**copy.deepcopy(_PVDM_COMMON),
               "diffusion": {**copy.deepcopy(_PVDM_COMMON["diffusion"]),
                             "base_channels": 128, "steps": 400000}},
    "pvdm-l": {**copy.deepcopy(_PVDM_COMMON),
               "diffusion": {**copy.deepcopy(_PVDM_COMMON["diffusion"]),
                             "base_channels": 256, "steps": 850000}},
    "desk-tiny": _DESK_TINY,
    "desk-overfit": _DESK_OVERFIT,
}


def get_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
