"""Autoencoder training with the composite objective and R-FVD early stop.

Generator and discriminator updates strictly alternate once the
adversarial weight switches on. Recon-metric evaluations run
periodically; the best-scoring checkpoint is kept and training stops
after a configured number of non-improving evaluations.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch

from ..config import RunConfig
from ..data.protocol import eval_clip_protocol
from ..eval.extractor import FeatureExtractorSpec, build_feature_extractor
from ..eval.metrics import feature_stats, frechet_distance, make_reconstructor, psnr
from ..losses import LossConfig, TrainState, ae_total_loss, gan_losses, EarlyStopMonitor
from ..models.autoencoder import build_autoencoder, save_autoencoder, decode, encode
from ..models.discriminator import ClipDiscriminator, DiscriminatorConfig
from ..models.perceptual import PerceptualExtractorSpec, build_perceptual_extractor
from .common import JsonlLogger, clip_batches


def _warmup_cosine(opt, tcfg) -> torch.optim.lr_scheduler.LambdaLR:
    import math

    warm = max(1, tcfg.warmup_steps)
    floor = tcfg.lr_floor_frac

    def factor(step: int) -> float:
        if step < warm:
            return (step + 1) / warm
        span = max(1, tcfg.steps - warm)
        progress = min(1.0, (step - warm) / span)
        return floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))

    return torch.optim.lr_scheduler.LambdaLR(opt, factor)


def _loss_config(cfg: RunConfig) -> LossConfig:
    ls = cfg.losses
    return LossConfig(
        lambda_perceptual=ls.lambda_perceptual,
        lambda_gan_before=ls.lambda_gan_before,
        lambda_gan_after=ls.lambda_gan_after,
        gan_start_step=ls.gan_start_step,
        perceptual=PerceptualExtractorSpec(seed=ls.perceptual_seed,
                                           channels=tuple(ls.perceptual_channels)))


def _r_fvd_eval(cfg: RunConfig, dataset, encoder, decoder, extractor) -> float:
    encoder.eval()
    decoder.eval()
    clips = eval_clip_protocol(dataset, cfg.ae_train.eval_clips,
                               dataset.clip_length, cfg.evaluation.protocol_seed)
    recon = make_reconstructor(encoder, decoder)
    recons = [recon(c) for c in clips]
    value = frechet_distance(feature_stats(clips, extractor),
                             feature_stats(recons, extractor))
    encoder.train()
    decoder.train()
    return value


def train_autoencoder(cfg: RunConfig, run_dir: str | Path,
                      dataset=None) -> dict:
    """Run AE training; returns a summary with checkpoint paths and metrics."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    dataset = dataset if dataset is not None else cfg.build_dataset()

    ae_cfg = cfg.autoencoder_config()
    encoder, decoder = build_autoencoder(ae_cfg)
    encoder.train()
    decoder.train()
    loss_cfg = _loss_config(cfg)
    perceptual = build_perceptual_extractor(loss_cfg.perceptual)
    disc = None
    opt_d = None
    if loss_cfg.gan_start_step is not None and loss_cfg.lambda_gan_after > 0:
        disc = ClipDiscriminator(DiscriminatorConfig(tuple(cfg.losses.disc_channels)))
        opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.ae_train.lr, betas=(0.5, 0.9))
    fvd_extractor = build_feature_extractor(FeatureExtractorSpec(
        seed=cfg.evaluation.extractor_seed,
        channels=tuple(cfg.evaluation.extractor_channels)))

    params = list(encoder.parameters()) + list(decoder.parameters())
    opt = torch.optim.Adam(params, lr=cfg.ae_train.lr)
    lr_sched = _warmup_cosine(opt, cfg.ae_train)
    logger = JsonlLogger(run_dir / "ae_train.jsonl")
    monitor = EarlyStopMonitor(patience=cfg.ae_train.patience)
    state = TrainState(step=0)
    best_path = run_dir / "ae_best.ckpt"
    last_path = run_dir / "ae_last.ckpt"
    gan_announced = False

    def save(path: Path, step: int, r_fvd_value: Optional[float]) -> None:
        save_autoencoder(path, encoder, decoder, extra_meta={
            "step": step,
            "r_fvd": r_fvd_value,
            "loss_config": {
                "lambda_perceptual": loss_cfg.lambda_perceptual,
                "lambda_gan_after": loss_cfg.lambda_gan_after,
                "gan_start_step": loss_cfg.gan_start_step,
                "perceptual": loss_cfg.perceptual.to_dict(),
            },
            "run_config_hash": cfg.config_hash(),
        })

    batches = clip_batches(dataset, cfg.ae_train.batch_size)
    stopped = False
    for step in range(1, cfg.ae_train.steps + 1):
        state.step = step
        x = next(batches)
        planes = encoder(x)
        x_tilde = decoder(planes)
        total, parts = ae_total_loss(x, x_tilde, state, loss_cfg, perceptual, disc)
        opt.zero_grad(set_to_none=True)
        if opt_d is not None:
            opt_d.zero_grad(set_to_none=True)
        total.backward()
        if cfg.ae_train.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(params, cfg.ae_train.grad_clip)
        opt.step()
        lr_sched.step()

        lam_gan = loss_cfg.lambda_gan(step)
        if lam_gan > 0 and disc is not None:
            if not gan_announced:
                logger.write(event="gan_switch", step=step, lambda_gan=lam_gan)
                gan_announced = True
            _, d_loss = gan_losses(disc, x, x_tilde.detach())
            opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            opt_d.step()
            parts["disc_loss"] = float(d_loss.detach())

        if step % cfg.ae_train.log_every == 0 or step == 1:
            logger.write(step=step, total=float(total.detach()), **parts)

        if step % cfg.ae_train.eval_every == 0 or step == cfg.ae_train.steps:
            value = _r_fvd_eval(cfg, dataset, encoder, decoder, fvd_extractor)
            decision = monitor.update(step, value)
            logger.write(event="r_fvd", step=step, r_fvd=value,
                         best_step=decision.best_step, stale=decision.stale_evals)
            if decision.best_step == step:
                save(best_path, step, value)
            if decision.should_stop:
                logger.write(event="early_stop", step=step,
                             best_step=decision.best_step)
                stopped = True
        save_needed = (step == cfg.ae_train.steps) or stopped
        if save_needed:
            save(last_path, step, monitor.history[-1][1] if monitor.history else None)
            break

    if not best_path.exists():
        save(best_path, state.step, None)

    encoder.eval()
    decoder.eval()
    psnr_values = []
    for i in range(len(dataset)):
        clip = dataset.clip(i)
        psnr_values.append(psnr(clip, decode(decoder, encode(encoder, clip))))
    train_psnr = sum(psnr_values) / len(psnr_values)
    summary = {
        "best_checkpoint": str(best_path),
        "last_checkpoint": str(last_path),
        "steps_run": state.step,
        "train_psnr_db": train_psnr,
        "r_fvd_history": monitor.history,
        "early_stopped": stopped,
    }
    logger.write(event="summary", **{k: v for k, v in summary.items()
                                     if k != "r_fvd_history"})
    return summary
