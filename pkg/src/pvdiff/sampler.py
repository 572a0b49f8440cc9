"""Reverse-process samplers and long-video generation by clip chaining.

The ancestral stepper follows the update

    z_{t-1} = (z_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(1 - beta_t)
              + sqrt(beta_t) * noise,

with no noise at the final step. The few-step sampler predicts z0 from
the noise estimate and jumps between an evenly spaced subsequence of
steps; eta scales its stochasticity (eta = 0 is deterministic).

Long videos: the first clip is sampled with the null condition and N
steps; every later clip is sampled with M steps conditioned on the
previous clip's clean latent, then decoded and concatenated. The noise
stream of clip l is a pure function of (seed, l), so extending the clip
count never perturbs earlier clips.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .diffusion.schedule import NoiseSchedule
from .errors import ConfigError, GeometryError

Planes = Tuple[torch.Tensor, torch.Tensor, torch.Tensor]
PlanesOrTensor = Union[Planes, torch.Tensor]

_CLIP_STREAM = 0x434C

SAMPLER_PRESETS = {
    "100/20-s": {"mode": "ddim", "steps_init": 100, "steps_cond": 20},
    "200/200-s": {"mode": "ddim", "steps_init": 200, "steps_cond": 200},
    "400/400-s": {"mode": "ddim", "steps_init": 400, "steps_cond": 400},
}


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "ddim"
    steps_init: int = 100        # N, initial clip
    steps_cond: int = 20         # M, every later clip
    eta: float = 0.0
    clips: int = 1               # L
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("ddpm", "ddim"):
            raise ConfigError(f"sampler mode must be ddpm or ddim, got {self.mode!r}")
        if self.steps_init < 1 or self.steps_cond < 1:
            raise ConfigError("step counts must be >= 1")
        if self.clips < 1:
            raise ConfigError("clip count L must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")

    def validate_against(self, schedule: NoiseSchedule) -> None:
        if self.steps_init > schedule.T or self.steps_cond > schedule.T:
            raise ConfigError(
                f"step counts ({self.steps_init}/{self.steps_cond}) exceed T={schedule.T}")
        if self.mode == "ddpm" and (self.steps_init != schedule.T
                                    or self.steps_cond != schedule.T):
            raise ConfigError("ddpm mode runs the full schedule; use ddim for fewer steps")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "steps_init": self.steps_init,
                "steps_cond": self.steps_cond, "eta": self.eta,
                "clips": self.clips, "seed": self.seed}


def _affine(z: PlanesOrTensor, a: float, e: PlanesOrTensor, b: float,
            n: Optional[PlanesOrTensor], c: float) -> PlanesOrTensor:
    if isinstance(z, torch.Tensor):
        out = a * z + b * e
        return out if n is None else out + c * n
    outs = []
    for i in range(len(z)):
        o = a * z[i] + b * e[i]
        if n is not None:
            o = o + c * n[i]
        outs.append(o)
    return tuple(outs)


def _is_nonzero(noise: Optional[PlanesOrTensor]) -> bool:
    if noise is None:
        return False
    if isinstance(noise, torch.Tensor):
        return bool(noise.abs().max() > 0)
    return any(bool(n.abs().max() > 0) for n in noise)


def ddpm_step(z_t: PlanesOrTensor, eps_hat: PlanesOrTensor, t: int,
              schedule: NoiseSchedule,
              noise: Optional[PlanesOrTensor] = None) -> PlanesOrTensor:
    """One ancestral reverse step t -> t-1; noise must be zero at t = 1."""
    if t < 1 or t > schedule.T:
        raise ConfigError(f"timestep {t} outside 1..{schedule.T}")
    if t == 1 and _is_nonzero(noise):
        raise ConfigError("the final reverse step (t=1) must receive zero noise")
    beta = schedule.beta(t)
    ab = schedule.alpha_bar(t)
    a = 1.0 / (1.0 - beta) ** 0.5
    b = -a * beta / (1.0 - ab) ** 0.5
    c = schedule.sigma(t)
    return _affine(z_t, a, eps_hat, b, noise, c)


def ddim_step(z_t: PlanesOrTensor, eps_hat: PlanesOrTensor, t: int, t_prev: int,
              schedule: NoiseSchedule, eta: float = 0.0,
              noise: Optional[PlanesOrTensor] = None) -> PlanesOrTensor:
    """Few-step reverse jump t -> t_prev via the x0-prediction identity."""
    if not 0 <= t_prev < t:
        raise ConfigError(f"need 0 <= t_prev < t, got t_prev={t_prev}, t={t}")
    if t > schedule.T:
        raise ConfigError(f"timestep {t} exceeds T={schedule.T}")
    ab_t = schedule.alpha_bar(t)
    ab_p = schedule.alpha_bar(t_prev)
    sigma = eta * ((1.0 - ab_p) / (1.0 - ab_t)) ** 0.5 * (1.0 - ab_t / ab_p) ** 0.5
    # z = sqrt(ab_p) * x0_hat + sqrt(1 - ab_p - sigma^2) * eps_hat + sigma * noise
    a = (ab_p / ab_t) ** 0.5
    dir_coef = max(1.0 - ab_p - sigma ** 2, 0.0) ** 0.5
    b = dir_coef - a * (1.0 - ab_t) ** 0.5
    if sigma == 0.0:
        noise = None
    elif noise is None:
        raise ConfigError("stochastic ddim step (eta > 0) requires a noise argument")
    return _affine(z_t, a, eps_hat, b, noise, sigma)


def ddim_steps(T: int, steps: int) -> List[int]:
    """Evenly spaced, strictly increasing step subsequence containing 1 and T."""
    if steps < 1 or steps > T:
        raise ConfigError(f"steps must lie in 1..{T}, got {steps}")
    if steps == 1:
        return [T]
    seq = np.round(np.linspace(1, T, steps)).astype(int).tolist()
    if len(set(seq)) != len(seq):
        raise ConfigError(f"degenerate step subsequence for T={T}, steps={steps}")
    return seq


DenoiseFn = Callable[[Planes, Optional[Planes], torch.Tensor], Planes]


def _plane_shapes_of(bundle) -> Tuple[Tuple[int, ...], ...]:
    cfg = bundle.cfg
    return tuple((cfg.latent_channels, h, w) for h, w in cfg.plane_shapes(1))


def _randn_planes(shapes, batch: int, generator: torch.Generator,
                  dtype=torch.float32) -> Planes:
    return tuple(torch.randn((batch,) + s, generator=generator, dtype=dtype)
                 for s in shapes)


def sample_clip(bundle: DenoiseFn, schedule: NoiseSchedule, cond: Optional[Planes],
                steps: int, mode: str = "ddim", seed: int = 0, eta: float = 0.0,
                batch: int = 1, generator: Optional[torch.Generator] = None,
                plane_shapes: Optional[Sequence[Tuple[int, ...]]] = None) -> Planes:
    """Run the reverse process from pure noise down to the clean latent planes.

    `bundle` is any callable (z_planes, cond, t_batch) -> eps_planes;
    plane shapes default to the bundle's config.
    """
    if mode not in ("ddpm", "ddim"):
        raise ConfigError(f"unknown sampler mode {mode!r}")
    if mode == "ddpm" and steps != schedule.T:
        raise ConfigError("ddpm mode runs the full schedule; use ddim for fewer steps")
    shapes = tuple(plane_shapes) if plane_shapes is not None else _plane_shapes_of(bundle)
    if generator is None:
        generator = torch.Generator().manual_seed(seed)
    z = _randn_planes(shapes, batch, generator)
    seq = ddim_steps(schedule.T, steps)
    prevs = [0] + seq[:-1]
    with torch.no_grad():
        for t, t_prev in zip(reversed(seq), reversed(prevs)):
            tt = torch.full((batch,), t, dtype=torch.long)
            eps_hat = bundle(z, cond, tt)
            if mode == "ddpm":
                noise = None if t == 1 else _randn_planes(shapes, batch, generator)
                z = ddpm_step(z, eps_hat, t, schedule, noise)
            else:
                noise = None
                if eta > 0.0 and t_prev > 0:
                    noise = _randn_planes(shapes, batch, generator)
                z = ddim_step(z, eps_hat, t, t_prev, schedule, eta, noise)
    return z


def clip_generator_seed(seed: int, clip_index: int) -> int:
    """Stable per-clip RNG seed derived by counter splitting."""
    ss = np.random.SeedSequence([seed, _CLIP_STREAM, clip_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2 ** 63))


@dataclass
class ClipTrace:
    clip_index: int
    cond_source: str             # "null" or "clip <l-1>"
    steps: int
    mode: str
    z0: Planes
    cond: Optional[Planes]


@dataclass
class LongVideoResult:
    frames: torch.Tensor         # (3, L*S, H, W)
    latents: List[Planes] = field(default_factory=list)
    trace: List[ClipTrace] = field(default_factory=list)


def generate_long_video(bundle, decoder, cfg: SamplerConfig,
                        schedule: NoiseSchedule) -> LongVideoResult:
    """Chain cfg.clips clips: unconditional first, each next conditioned on
    the previous clip's clean latent, all decoded and concatenated."""
    cfg.validate_against(schedule)
    dcfg = decoder.cfg
    bcfg = bundle.cfg
    if (dcfg.latent_channels != bcfg.latent_channels
            or (dcfg.clip_length, dcfg.latent_h, dcfg.latent_w)
            != (bcfg.clip_length, bcfg.latent_h, bcfg.latent_w)):
        raise GeometryError(
            f"denoiser latent geometry (C={bcfg.latent_channels}, S={bcfg.clip_length}, "
            f"{bcfg.latent_h}x{bcfg.latent_w}) does not match decoder "
            f"(C={dcfg.latent_channels}, S={dcfg.clip_length}, "
            f"{dcfg.latent_h}x{dcfg.latent_w})")
    result = LongVideoResult(frames=None)
    clips = []
    prev_z0: Optional[Planes] = None
    for ell in range(1, cfg.clips + 1):
        gen = torch.Generator().manual_seed(clip_generator_seed(cfg.seed, ell))
        cond = prev_z0 if ell > 1 else None
        steps = cfg.steps_init if ell == 1 else cfg.steps_cond
        z0 = sample_clip(bundle, schedule, cond, steps, mode=cfg.mode,
                         eta=cfg.eta, generator=gen)
        with torch.no_grad():
            x = decoder(z0).clamp(-1.0, 1.0)
        clips.append(x[0])
        result.latents.append(z0)
        result.trace.append(ClipTrace(
            clip_index=ell,
            cond_source="null" if cond is None else f"clip {ell - 1}",
            steps=steps, mode=cfg.mode, z0=tuple(p.clone() for p in z0),
            cond=None if cond is None else tuple(p.clone() for p in cond)))
        prev_z0 = z0
    result.frames = torch.cat(clips, dim=1)
    return result
