"""Reconstruction and generation metrics.

PSNR uses the signed pixel range (peak-to-peak 2). The Fréchet distance
takes the usual mean/covariance form; the matrix square root goes
through an eigendecomposition of the symmetrized inner product with an
eigenvalue floor, and covariances are shrunk by a small diagonal so
near-singular desk-scale statistics stay stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
import torch

from ..data.clips import VideoClip
from ..data.datasets import DatasetHandle
from ..data.protocol import eval_clip_protocol
from ..errors import DataError, GeometryError
from .extractor import extract_features

PSNR_CAP_DB = 99.0
EIG_FLOOR = 1e-10
COV_SHRINK = 1e-6
NEG_TOL = 1e-6


def psnr(x: VideoClip | torch.Tensor, x_tilde: VideoClip | torch.Tensor) -> float:
    """10 log10(peak^2 / MSE) with peak = 2; identical inputs cap at 99 dB."""
    a = x.pixels if isinstance(x, VideoClip) else x
    b = x_tilde.pixels if isinstance(x_tilde, VideoClip) else x_tilde
    if a.shape != b.shape:
        raise GeometryError(f"psnr shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    mse = float((a.double() - b.double()).pow(2).mean())
    if mse <= 0.0:
        return PSNR_CAP_DB
    value = 10.0 * math.log10(4.0 / mse)
    return min(value, PSNR_CAP_DB)


@dataclass
class FeatureStats:
    mu: np.ndarray          # (D,)
    sigma: np.ndarray       # (D, D), unbiased
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DataError("feature statistics need at least 2 samples")
        if self.mu.ndim != 1 or self.sigma.shape != (self.mu.size, self.mu.size):
            raise GeometryError("inconsistent feature statistic shapes")


def feature_stats(clips: Sequence[VideoClip], extractor) -> FeatureStats:
    """Mean and unbiased covariance of extractor outputs over the clips."""
    if len(clips) < 2:
        raise DataError("need at least 2 clips for feature statistics")
    feats = extract_features(extractor, list(clips)).double().numpy()
    mu = feats.mean(axis=0)
    sigma = np.cov(feats, rowvar=False)
    sigma = np.atleast_2d(sigma)
    return FeatureStats(mu=mu, sigma=sigma, n=feats.shape[0])


def stats_from_features(feats: np.ndarray) -> FeatureStats:
    feats = np.asarray(feats, dtype=np.float64)
    return FeatureStats(mu=feats.mean(axis=0),
                        sigma=np.atleast_2d(np.cov(feats, rowvar=False)),
                        n=feats.shape[0])


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, EIG_FLOOR, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))."""
    if a.mu.shape != b.mu.shape:
        raise GeometryError(f"feature dims differ: {a.mu.shape} vs {b.mu.shape}")
    for s in (a, b):
        if not (np.isfinite(s.mu).all() and np.isfinite(s.sigma).all()):
            raise DataError("non-finite feature statistics")
    d = a.mu.size
    sa = (a.sigma + a.sigma.T) / 2.0 + COV_SHRINK * np.eye(d)
    sb = (b.sigma + b.sigma.T) / 2.0 + COV_SHRINK * np.eye(d)
    diff = a.mu - b.mu
    root_a = _psd_sqrt(sa)
    inner = root_a @ sb @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = float(np.sqrt(np.clip(vals, 0.0, None)).sum())
    value = float(diff @ diff + np.trace(sa) + np.trace(sb) - 2.0 * tr_sqrt)
    if value < -NEG_TOL:
        raise DataError(f"Fréchet distance collapsed to {value}; inputs likely invalid")
    return max(value, 0.0)


def r_fvd(reconstruct: Callable[[VideoClip], VideoClip], dataset: DatasetHandle,
          extractor, n: int, seed: int, length: int | None = None) -> float:
    """Fréchet distance between protocol clips and their reconstructions."""
    clips = eval_clip_protocol(dataset, n, length or dataset.clip_length, seed)
    recons = [reconstruct(c) for c in clips]
    return frechet_distance(feature_stats(clips, extractor),
                            feature_stats(recons, extractor))


def make_reconstructor(encoder, decoder) -> Callable[[VideoClip], VideoClip]:
    from ..models.autoencoder import decode, encode

    def reconstruct(clip: VideoClip) -> VideoClip:
        return decode(decoder, encode(encoder, clip))

    return reconstruct


def inception_score(clips: Sequence[VideoClip], classifier,
                    batch_size: int = 16) -> float:
    """Softmax-entropy score over a pluggable clip classifier.

    exp(E_x[KL(p(y|x) || p(y))]); provided for completeness, needs an
    external classifier asset to be meaningful.
    """
    probs = []
    for i in range(0, len(clips), batch_size):
        chunk = torch.stack([c.pixels for c in clips[i:i + batch_size]])
        with torch.no_grad():
            logits = classifier(chunk)
        probs.append(torch.softmax(logits.double(), dim=1))
    p = torch.cat(probs, dim=0).clamp_min(1e-12)
    marginal = p.mean(dim=0, keepdim=True)
    kl = (p * (p.log() - marginal.log())).sum(dim=1).mean()
    return float(torch.exp(kl))
