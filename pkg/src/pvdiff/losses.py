"""Composite autoencoder objective and the early-stopping monitor.

Total generator loss: pixel L1 + lambda_perc * perceptual + lambda_gan *
(hinge generator loss + feature matching). The adversarial weight is 0
until the switch rule fires, then jumps to its post-switch value; the
discriminator is trained on its own hinge loss in alternation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from .errors import ConfigError, GeometryError
from .models.discriminator import ClipDiscriminator
from .models.perceptual import FeaturePyramid, PerceptualExtractorSpec


@dataclass
class LossConfig:
    lambda_perceptual: float = 1.0
    lambda_gan_before: float = 0.0
    lambda_gan_after: float = 0.25
    gan_start_step: Optional[int] = None     # None = adversarial term never activates
    perceptual: PerceptualExtractorSpec = field(default_factory=PerceptualExtractorSpec)

    def __post_init__(self):
        for name in ("lambda_perceptual", "lambda_gan_before", "lambda_gan_after"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def lambda_gan(self, step: int) -> float:
        if self.gan_start_step is None or step < self.gan_start_step:
            return self.lambda_gan_before
        return self.lambda_gan_after


@dataclass
class TrainState:
    step: int = 0


def _check_same_shape(x: torch.Tensor, y: torch.Tensor) -> None:
    if x.shape != y.shape:
        raise GeometryError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")


def pixel_loss(x: torch.Tensor, x_tilde: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all elements."""
    _check_same_shape(x, x_tilde)
    return (x - x_tilde).abs().mean()


def perceptual_loss(x: torch.Tensor, x_tilde: torch.Tensor,
                    extractor: FeaturePyramid) -> torch.Tensor:
    """Unit-normalized feature distance, averaged over frames.

    Per frame and stage: channel-normalize both feature maps, take the
    squared difference, average over channels and positions; stages are
    summed, frames averaged. Inputs are (B, 3, S, H, W) or (3, S, H, W).
    """
    if x.ndim == 4:
        x, x_tilde = x[None], x_tilde[None]
    _check_same_shape(x, x_tilde)
    b, _, s, h, w = x.shape
    fx = extractor(x.permute(0, 2, 1, 3, 4).reshape(b * s, 3, h, w))
    fy = extractor(x_tilde.permute(0, 2, 1, 3, 4).reshape(b * s, 3, h, w))
    total = x.new_zeros(())
    for fa, fb in zip(fx, fy):
        na = fa / fa.pow(2).sum(dim=1, keepdim=True).add(1e-10).sqrt()
        nb = fb / fb.pow(2).sum(dim=1, keepdim=True).add(1e-10).sqrt()
        total = total + (na - nb).pow(2).mean(dim=(1, 2, 3)).sum() / (b * s)
    return total


def gan_losses(disc: ClipDiscriminator, x: torch.Tensor,
               x_tilde: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """(generator_loss, discriminator_loss) for one real/fake pair batch.

    Generator side: -mean(D(fake)) plus per-layer L1 feature matching
    against the real features held constant. Discriminator side: hinge
    loss on real and detached fake.
    """
    _check_same_shape(x, x_tilde)
    score_real, feats_real = disc(x)
    score_fake, feats_fake = disc(x_tilde)
    score_fake_d, _ = disc(x_tilde.detach())
    d_loss = F.relu(1.0 - score_real).mean() + F.relu(1.0 + score_fake_d).mean()
    fm = x.new_zeros(())
    for fr, ff in zip(feats_real, feats_fake):
        fm = fm + (fr.detach() - ff).abs().mean()
    fm = fm / len(feats_real)
    g_loss = -score_fake.mean() + fm
    return g_loss, d_loss


def ae_total_loss(x: torch.Tensor, x_tilde: torch.Tensor, state: TrainState,
                  cfg: LossConfig, extractor: FeaturePyramid,
                  disc: Optional[ClipDiscriminator] = None) -> Tuple[torch.Tensor, dict]:
    """Generator-side total plus a parts breakdown for logging.

    Before the switch the total is exactly pixel + lambda_perc *
    perceptual; afterwards the generator-side adversarial term joins
    with its post-switch weight.
    """
    lp = pixel_loss(x, x_tilde)
    lperc = perceptual_loss(x, x_tilde, extractor)
    lam = cfg.lambda_gan(state.step)
    parts = {"pixel": float(lp.detach()), "perceptual": float(lperc.detach()),
             "lambda_gan": lam}
    total = lp + cfg.lambda_perceptual * lperc
    if lam > 0:
        if disc is None:
            raise ConfigError("adversarial weight active but no discriminator given")
        g_loss, d_loss = gan_losses(disc, x, x_tilde)
        total = total + lam * g_loss
        parts["gan_g"] = float(g_loss.detach())
        parts["gan_d"] = float(d_loss.detach())
    return total, parts


@dataclass
class StopDecision:
    best_index: int
    best_step: int
    best_value: float
    should_stop: bool
    stale_evals: int


def early_stop_decision(history: Sequence[Tuple[int, float]],
                        patience: int = 3) -> StopDecision:
    """Keep the minimum of the history; stop after `patience` consecutive
    non-improving evaluations. Ties keep the earlier checkpoint."""
    if not history:
        raise ValueError("empty history")
    best_index = 0
    for i, (_, value) in enumerate(history):
        if value < history[best_index][1]:
            best_index = i
    stale = len(history) - 1 - best_index
    return StopDecision(best_index=best_index,
                        best_step=history[best_index][0],
                        best_value=history[best_index][1],
                        should_stop=stale >= patience,
                        stale_evals=stale)


class EarlyStopMonitor:
    """Stateful wrapper used by the trainer; records (step, value) pairs."""

    def __init__(self, patience: int = 3):
        self.patience = patience
        self.history: List[Tuple[int, float]] = []

    def update(self, step: int, value: float) -> StopDecision:
        self.history.append((step, value))
        return early_stop_decision(self.history, self.patience)
