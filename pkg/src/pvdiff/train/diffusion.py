"""Latent diffusion training over consecutive-clip latent pairs.

The autoencoder is frozen; pair latents are precomputed for every
aligned pair offset of every eligible video. All stochasticity (pair
choice, timestep, noise, branch selection) flows through one dedicated
torch generator whose state is checkpointed, so resuming reproduces the
uninterrupted run exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch

from ..checkpoint import (Checkpoint, load_checkpoint, load_state_dict_arrays,
                          optimizer_arrays, restore_optimizer, save_checkpoint,
                          state_dict_arrays)
from ..config import RunConfig
from ..data.datasets import DatasetHandle
from ..diffusion.loss import bernoulli_branch_mask, diffusion_loss
from ..diffusion.schedule import NoiseSchedule, make_linear_schedule
from ..diffusion.unet import DenoiserBundle, DenoiserConfig
from ..errors import CheckpointError, ConfigError, GeometryError
from ..models.autoencoder import AutoencoderConfig, load_autoencoder
from .common import JsonlLogger

Planes = Tuple[torch.Tensor, torch.Tensor, torch.Tensor]

DIFF_CKPT_KIND = "pvdiff-diffusion"


def check_latent_geometry(run_ae: AutoencoderConfig, ckpt_ae: AutoencoderConfig) -> None:
    keys = ("clip_length", "height", "width", "downsample", "latent_channels",
            "use_projection")
    a = {k: getattr(run_ae, k) for k in keys}
    b = {k: getattr(ckpt_ae, k) for k in keys}
    if a != b:
        raise CheckpointError(
            f"autoencoder geometry mismatch: run config {a} vs checkpoint {b}")
    if not ckpt_ae.use_projection:
        raise CheckpointError("diffusion training needs a triplane (projection-on) autoencoder")


def encode_pair_latents(encoder, dataset: DatasetHandle,
                        batch_size: int = 8) -> Tuple[Planes, Planes]:
    """Latents of (first, second) clips for every aligned pair offset of
    every eligible video; returns two plane triples stacked over pairs."""
    from ..data.datasets import sample_clip_pair  # noqa: F401  (aligned policy lives here)

    s = dataset.clip_length
    firsts: List[torch.Tensor] = []
    seconds: List[torch.Tensor] = []
    for vi in dataset.pair_eligible_videos():
        n = dataset.video_frames(vi)
        for start in range(0, n - 2 * s + 1, s):
            firsts.append(dataset.video_clip(vi, start).pixels)
            seconds.append(dataset.video_clip(vi, start + s).pixels)
    if not firsts:
        raise ConfigError("no consecutive-clip pairs available for diffusion training")

    def encode_stack(clips: List[torch.Tensor]) -> Planes:
        outs = [[], [], []]
        with torch.no_grad():
            for i in range(0, len(clips), batch_size):
                planes = encoder(torch.stack(clips[i:i + batch_size]))
                for j in range(3):
                    outs[j].append(planes[j])
        return tuple(torch.cat(o, dim=0) for o in outs)

    return encode_stack(firsts), encode_stack(seconds)


def save_diffusion_checkpoint(path, bundle: DenoiserBundle, opt: torch.optim.Optimizer,
                              schedule: NoiseSchedule, generator: torch.Generator,
                              step: int, cfg: RunConfig,
                              ae_config: AutoencoderConfig) -> Path:
    arrays = state_dict_arrays(bundle, "model/")
    opt_arrays, opt_skeleton = optimizer_arrays(opt, "opt/")
    arrays.update(opt_arrays)
    arrays["rng/train_generator"] = generator.get_state().numpy()
    arrays["schedule/betas"] = schedule.betas.numpy()
    meta = {
        "kind": DIFF_CKPT_KIND,
        "step": step,
        "denoiser_config": bundle.cfg.to_dict(),
        "schedule": schedule.to_dict(),
        "lam": cfg.diffusion.lam,
        "joint_mode": cfg.diffusion.joint_mode,
        "optimizer": opt_skeleton,
        "ae_config": ae_config.to_dict(),
        "run_config_hash": cfg.config_hash(),
    }
    return save_checkpoint(path, meta, arrays)


def load_diffusion_bundle(path) -> Tuple[DenoiserBundle, NoiseSchedule, AutoencoderConfig, Checkpoint]:
    ckpt = load_checkpoint(path)
    if ckpt.meta.get("kind") != DIFF_CKPT_KIND:
        raise CheckpointError(f"{path}: not a diffusion checkpoint "
                              f"(kind={ckpt.meta.get('kind')!r})")
    den_cfg = DenoiserConfig.from_dict(ckpt.meta["denoiser_config"])
    bundle = DenoiserBundle(den_cfg)
    load_state_dict_arrays(bundle, ckpt, "model/")
    bundle.eval()
    sd = ckpt.meta["schedule"]
    schedule = make_linear_schedule(sd["T"], sd["start"], sd["end"])
    stored = ckpt.arrays.get("schedule/betas")
    if stored is None or not np.array_equal(stored, schedule.betas.numpy()):
        raise CheckpointError(f"{path}: stored schedule does not match its parameters")
    ae_cfg = AutoencoderConfig.from_dict(ckpt.meta["ae_config"])
    return bundle, schedule, ae_cfg, ckpt


def train_diffusion(cfg: RunConfig, ae_checkpoint: str | Path, run_dir: str | Path,
                    resume: Optional[str | Path] = None, dataset=None) -> dict:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dcfg = cfg.diffusion

    encoder, _, ae_cfg, _ = load_autoencoder(ae_checkpoint)
    check_latent_geometry(cfg.autoencoder_config(), ae_cfg)
    dataset = dataset if dataset is not None else cfg.build_dataset()
    dataset.assert_pair_eligible()

    schedule = make_linear_schedule(dcfg.timesteps, dcfg.linear_start, dcfg.linear_end)
    den_cfg = cfg.denoiser_config(ae_cfg)

    torch.manual_seed(cfg.seed)
    bundle = DenoiserBundle(den_cfg)
    opt = torch.optim.AdamW(bundle.parameters(), lr=dcfg.lr)
    generator = torch.Generator().manual_seed(cfg.seed + 1)
    start_step = 0
    if resume is not None:
        prev, prev_sched, prev_ae, ckpt = load_diffusion_bundle(resume)
        if prev.cfg != den_cfg:
            raise CheckpointError(
                f"resume checkpoint denoiser config {prev.cfg.to_dict()} "
                f"differs from run config {den_cfg.to_dict()}")
        if not np.array_equal(prev_sched.betas.numpy(), schedule.betas.numpy()):
            raise CheckpointError("resume checkpoint schedule differs from run config")
        bundle = prev
        bundle.train()
        restore_optimizer(opt, ckpt, ckpt.meta["optimizer"], "opt/")
        generator.set_state(torch.from_numpy(ckpt.arrays["rng/train_generator"].copy()))
        start_step = int(ckpt.meta["step"])

    z_prev_all, z_cur_all = encode_pair_latents(encoder, dataset,
                                                batch_size=dcfg.batch_size)
    n_pairs = z_prev_all[0].shape[0]
    logger = JsonlLogger(run_dir / "diffusion_train.jsonl")
    last_path = run_dir / "diffusion_last.ckpt"
    bundle.train()

    step = start_step
    for step in range(start_step + 1, dcfg.steps + 1):
        idx = torch.randint(n_pairs, (dcfg.batch_size,), generator=generator)
        z0_prev = tuple(p[idx] for p in z_prev_all)
        z0_cur = tuple(p[idx] for p in z_cur_all)
        t = torch.randint(1, schedule.T + 1, (dcfg.batch_size,), generator=generator)
        eps = tuple(torch.randn(p.shape, generator=generator) for p in z0_cur)
        mask = None
        if dcfg.joint_mode == "bernoulli":
            mask = bernoulli_branch_mask(dcfg.lam, dcfg.batch_size, generator)
        loss = diffusion_loss(bundle, (z0_prev, z0_cur), t, eps, dcfg.lam,
                              schedule, joint_mode=dcfg.joint_mode,
                              branch_mask=mask)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if step % dcfg.log_every == 0 or step == 1:
            rec = {"step": step, "loss": float(loss.detach()), "lam": dcfg.lam,
                   "joint_mode": dcfg.joint_mode}
            if mask is not None:
                rec["cond_fraction"] = float(mask.float().mean())
            logger.write(**rec)
        if step % dcfg.checkpoint_every == 0 or step == dcfg.steps:
            save_diffusion_checkpoint(last_path, bundle, opt, schedule, generator,
                                      step, cfg, ae_cfg)
            if step % dcfg.checkpoint_every == 0 and step != dcfg.steps:
                save_diffusion_checkpoint(run_dir / f"diffusion_step_{step:06d}.ckpt",
                                          bundle, opt, schedule, generator, step,
                                          cfg, ae_cfg)

    summary = {
        "last_checkpoint": str(last_path),
        "steps_run": step,
        "n_pairs": n_pairs,
    }
    logger.write(event="summary", **summary)
    return summary
