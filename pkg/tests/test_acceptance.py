"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The two training-backed
criteria reuse session-scoped fixtures from conftest.py, so the desk
autoencoder and denoiser are each trained once per pytest session.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
import scipy.stats
import torch

from tests.conftest import finite_diff_check


@contextmanager
def criterion(number, description, budget_s=None):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"[ACCEPTANCE] criterion {number} FAIL: {description}")
        raise
    elapsed = time.perf_counter() - start
    print(f"[ACCEPTANCE] criterion {number} PASS: {description} "
          f"({elapsed:.1f}s{'' if budget_s is None else f' / budget {budget_s:.0f}s'})")
    if budget_s is not None:
        assert elapsed < budget_s, f"criterion {number} exceeded budget: {elapsed:.1f}s"


def test_criterion_1_schedule_fidelity():
    from pvdiff.diffusion.schedule import make_linear_schedule
    from tests.test_schedule import high_precision_alpha_bars

    with criterion(1, "linear schedule endpoints + alpha-bar product oracle to 1e-12",
                   budget_s=60):
        t0 = time.perf_counter()
        s = make_linear_schedule(1000, 0.0015, 0.0195)
        build_time = time.perf_counter() - t0
        assert build_time < 1.0
        assert float(s.betas[0]) == 0.0015
        assert float(s.betas[-1]) == 0.0195
        oracle = high_precision_alpha_bars(1000, 0.0015, 0.0195)
        np.testing.assert_allclose(s.alpha_bars.numpy(), oracle, rtol=0, atol=1e-12)


def test_criterion_2_latent_accounting():
    from pvdiff.eval.profiler import latent_dim_accounting
    from pvdiff.models.autoencoder import AutoencoderConfig

    with criterion(2, "latent accounting: paper config 8192, desk config 768",
                   budget_s=1):
        paper = AutoencoderConfig(clip_length=16, height=256, width=256,
                                  downsample=8, latent_channels=4, patch_h=4,
                                  patch_w=4, backbone_width=8, backbone_heads=2,
                                  proj_width=8, proj_heads=2)
        assert latent_dim_accounting(paper) == 8192
        desk = AutoencoderConfig(clip_length=8, height=64, width=64, downsample=8,
                                 latent_channels=4, patch_h=8, patch_w=8,
                                 backbone_width=8, backbone_heads=2,
                                 proj_width=8, proj_heads=2)
        assert latent_dim_accounting(desk) == 768


def test_criterion_3_algebraic_identities():
    from pvdiff.diffusion.schedule import make_linear_schedule, q_sample, recover_z0
    from pvdiff.eval.metrics import FeatureStats, frechet_distance
    from pvdiff.sampler import ddpm_step

    with criterion(3, "x0-recovery 1e-10, ddpm scalar sqrt(2)-1 to 1e-12, "
                      "Frechet 1-D closed form to 1e-6", budget_s=10):
        sched = make_linear_schedule(1000, 0.0015, 0.0195)
        g = torch.Generator().manual_seed(0)
        for t in (1, 137, 1000):
            z0 = torch.randn(4, 7, 5, generator=g, dtype=torch.float64)
            eps = torch.randn(4, 7, 5, generator=g, dtype=torch.float64)
            back = recover_z0(q_sample(z0, t, eps, sched), t, eps, sched)
            assert (back - z0).abs().max().item() < 1e-10

        s1 = make_linear_schedule(1, 0.5, 0.5)
        out = ddpm_step(torch.tensor([1.0], dtype=torch.float64),
                        torch.tensor([1.0], dtype=torch.float64), 1, s1, None)
        assert abs(out.item() - (math.sqrt(2) - 1)) < 1e-12

        a = FeatureStats(mu=np.array([0.0]), sigma=np.array([[1.0]]), n=8)
        b = FeatureStats(mu=np.array([3.0]), sigma=np.array([[4.0]]), n=8)
        assert abs(frechet_distance(a, b) - 10.0) < 1e-6


def test_criterion_4_gradient_correctness():
    from pvdiff.diffusion.loss import diffusion_loss
    from pvdiff.diffusion.schedule import make_linear_schedule
    from pvdiff.diffusion.unet import DenoiserBundle, DenoiserConfig
    from pvdiff.losses import LossConfig, TrainState, ae_total_loss
    from pvdiff.models.autoencoder import build_autoencoder
    from pvdiff.models.discriminator import ClipDiscriminator, DiscriminatorConfig
    from pvdiff.models.perceptual import (PerceptualExtractorSpec,
                                          build_perceptual_extractor)
    from tests.test_autoencoder import tiny_config
    from tests.test_denoiser import randomize

    with criterion(4, "finite-difference checks: ae_total_loss (gan off/on) "
                      "and diffusion_loss, rel err <= 1e-3 on >= 95% of 200 coords",
                   budget_s=300):
        torch.manual_seed(0)
        enc, dec = build_autoencoder(tiny_config())
        enc.double()
        dec.double()
        extractor = build_perceptual_extractor(
            PerceptualExtractorSpec(seed=5, channels=(4,))).double()
        disc = ClipDiscriminator(DiscriminatorConfig(channels=(4,))).double()
        x = (torch.rand(1, 3, 2, 8, 8, dtype=torch.float64) * 2 - 1)
        ae_params = list(enc.parameters()) + list(dec.parameters())

        off = LossConfig(lambda_perceptual=1.0, gan_start_step=None)

        def loss_off():
            return ae_total_loss(x, dec(enc(x)), TrainState(step=1), off,
                                 extractor, disc)[0]

        finite_diff_check(loss_off, ae_params, n_coords=200, h=1e-5,
                          rel_tol=1e-3, min_frac=0.95, seed=10)

        on = LossConfig(lambda_perceptual=1.0, lambda_gan_after=0.25,
                        gan_start_step=0)

        def loss_on():
            return ae_total_loss(x, dec(enc(x)), TrainState(step=1), on,
                                 extractor, disc)[0]

        finite_diff_check(loss_on, ae_params, n_coords=200, h=1e-5,
                          rel_tol=1e-3, min_frac=0.95, seed=11)

        sched = make_linear_schedule(1000, 0.0015, 0.0195)
        dcfg = DenoiserConfig(latent_channels=2, clip_length=2, latent_h=2,
                              latent_w=2, base_channels=8, channel_mult=(1,),
                              num_res_blocks=1, attn_factors=(1,), num_heads=2)
        bundle = randomize(DenoiserBundle(dcfg), seed=7).double()
        gp = torch.Generator().manual_seed(2)
        pair = tuple(
            tuple(torch.randn(1, 2, h, w, generator=gp, dtype=torch.float64)
                  for h, w in dcfg.plane_shapes(1))
            for _ in range(2))
        eps = tuple(torch.randn(1, 2, h, w, generator=gp, dtype=torch.float64)
                    for h, w in dcfg.plane_shapes(1))
        t = torch.tensor([345])

        def loss_diff():
            return diffusion_loss(bundle, pair, t, eps, 0.5, sched)

        finite_diff_check(loss_diff, list(bundle.parameters()), n_coords=200,
                          h=1e-5, rel_tol=1e-3, min_frac=0.95, seed=12)


def test_criterion_5_structural_invariants():
    from pvdiff.models.autoencoder import build_autoencoder
    from pvdiff.models.triplane import TriplaneLatent, build_latent_grid
    from pvdiff.diffusion.unet import DenoiserBundle
    from tests.test_autoencoder import tiny_config
    from tests.test_denoiser import desk_denoiser_config, rand_planes, randomize

    with criterion(5, "tanh bound, shape round-trip, exhaustive grid identity, "
                      "weight sharing, batch independence, null-condition equality",
                   budget_s=120):
        torch.manual_seed(0)
        # tanh bound under adversarial scaling + shape round-trip
        enc, dec = build_autoencoder(tiny_config())
        for scale in (1.0, 1e4):
            x = (torch.rand(2, 3, 2, 8, 8) * 2 - 1) * scale
            with torch.no_grad():
                planes = enc(x)
                recon = dec(planes)
            assert all(p.abs().max() < 1.0 for p in planes)
            assert recon.shape == x.shape

        # exhaustive 2x2x2 latent-grid concatenation identity
        g = torch.Generator().manual_seed(1)
        z = TriplaneLatent(torch.randn(1, 2, 2, generator=g),
                           torch.randn(1, 2, 2, generator=g),
                           torch.randn(1, 2, 2, generator=g))
        v = build_latent_grid(z).v
        for s in range(2):
            for h in range(2):
                for w in range(2):
                    want = torch.cat([z.z_s[:, h, w], z.z_h[:, s, w], z.z_w[:, s, h]])
                    assert torch.equal(v[:, s, h, w], want)

        # shared trunk witness + batch independence + null-condition equality
        cfg = desk_denoiser_config()
        bundle = randomize(DenoiserBundle(cfg), seed=3)
        zp = rand_planes(cfg, batch=2, seed=4)
        t = torch.tensor([11, 11])
        base = bundle(zp, None, t)
        with torch.no_grad():
            bundle.conv_in.weight.add_(0.03)
        moved = bundle(zp, None, t)
        assert all((a - b).abs().max() > 0 for a, b in zip(base, moved))

        z_zero = tuple(p.clone() for p in zp)
        for p in z_zero:
            p[0].zero_()
        out_a = bundle(zp, None, t)
        out_b = bundle(z_zero, None, t)
        for a, b in zip(out_a, out_b):
            assert (a[0] - b[0]).abs().max() > 0
            assert torch.equal(a[1], b[1])

        zeros = tuple(torch.zeros_like(p) for p in zp)
        for a, b in zip(bundle(zp, None, t), bundle(zp, zeros, t)):
            assert torch.equal(a, b)


@pytest.mark.slow
def test_criterion_6_desk_autoencoder_overfit(desk_ae_run):
    with criterion(6, "desk AE overfit: train PSNR >= 30 dB and R-FVD trending "
                      "down (Spearman < -0.5)", budget_s=7200):
        summary = desk_ae_run["summary"]
        assert summary["train_psnr_db"] >= 30.0, (
            f"train PSNR {summary['train_psnr_db']:.2f} dB < 30")
        hist = summary["r_fvd_history"]
        assert len(hist) >= 4, f"need several R-FVD evals, got {len(hist)}"
        steps, values = zip(*hist)
        rho, _ = scipy.stats.spearmanr(steps, values)
        assert rho < -0.5, f"R-FVD trend Spearman {rho:.3f} not < -0.5 ({hist})"


@pytest.mark.slow
def test_criterion_7_desk_diffusion_overfit(desk_diffusion_run):
    from pvdiff.models.autoencoder import load_autoencoder
    from pvdiff.sampler import sample_clip
    from pvdiff.train.diffusion import encode_pair_latents, load_diffusion_bundle

    with criterion(7, "diffusion overfit: unconditional min-MSE < 10% latent "
                      "variance; conditional beats shuffled in >= 80% of trials",
                   budget_s=3600):
        cfg = desk_diffusion_run["cfg"]
        bundle, sched, _, _ = load_diffusion_bundle(
            desk_diffusion_run["summary"]["last_checkpoint"])
        encoder, _, _, _ = load_autoencoder(desk_diffusion_run["ae_checkpoint"])
        dataset = cfg.build_dataset()
        z_prev, z_cur = encode_pair_latents(encoder, dataset)
        train_lat = torch.cat(
            [torch.cat([p.flatten(1) for p in planes], dim=1)
             for planes in (z_prev, z_cur)], dim=0)        # (2P, D)
        variance = train_lat.var(dim=0, unbiased=True).mean().item()

        n_samples = 16
        samples = sample_clip(bundle, sched, None, steps=100, mode="ddim",
                              seed=123, batch=n_samples)
        flat = torch.cat([p.flatten(1) for p in samples], dim=1)
        min_mses = []
        for i in range(n_samples):
            d = (flat[i][None] - train_lat).pow(2).mean(dim=1)
            min_mses.append(float(d.min()))
        mean_min_mse = float(np.mean(min_mses))
        assert mean_min_mse < 0.1 * variance, (
            f"min-MSE {mean_min_mse:.4f} vs 10% variance {0.1 * variance:.4f}")

        # conditional continuation: closer to the true next-clip latent than
        # to a shuffled clip's latent
        n_pairs = z_prev[0].shape[0]
        wins = 0
        trials = 0
        rng = np.random.default_rng(5)
        for rep in range(2):
            for i in range(n_pairs):
                cond = tuple(p[i:i + 1] for p in z_prev)
                out = sample_clip(bundle, sched, cond, steps=100, mode="ddim",
                                  seed=1000 + rep * n_pairs + i, batch=1)
                out_flat = torch.cat([p.flatten(1) for p in out], dim=1)[0]
                true_flat = torch.cat([p[i].flatten() for p in z_cur])
                j = int(rng.choice([k for k in range(n_pairs) if k != i]))
                shuf_flat = torch.cat([p[j].flatten() for p in z_cur])
                mse_true = float((out_flat - true_flat).pow(2).mean())
                mse_shuf = float((out_flat - shuf_flat).pow(2).mean())
                wins += mse_true < mse_shuf
                trials += 1
        assert wins / trials >= 0.8, f"conditional wins {wins}/{trials}"


@pytest.mark.slow
def test_criterion_8_clip_chaining(desk_diffusion_run, tmp_path):
    from pvdiff.data.video_io import write_frame_sequence
    from pvdiff.models.autoencoder import load_autoencoder
    from pvdiff.sampler import SamplerConfig, generate_long_video
    from pvdiff.train.diffusion import load_diffusion_bundle

    with criterion(8, "L=4 chaining: 4*S frames, bit-matched conditioning, "
                      "byte-identical reruns", budget_s=300):
        bundle, sched, _, _ = load_diffusion_bundle(
            desk_diffusion_run["summary"]["last_checkpoint"])
        _, decoder, ae_cfg, _ = load_autoencoder(desk_diffusion_run["ae_checkpoint"])
        scfg = SamplerConfig(mode="ddim", steps_init=50, steps_cond=25,
                             clips=4, seed=77)
        res1 = generate_long_video(bundle, decoder, scfg, sched)
        assert res1.frames.shape == (3, 4 * ae_cfg.clip_length,
                                     ae_cfg.height, ae_cfg.width)
        for ell in range(1, 4):
            for c, z in zip(res1.trace[ell].cond, res1.trace[ell - 1].z0):
                assert torch.equal(c, z)
        paths1 = write_frame_sequence(res1.frames, tmp_path / "run1")
        res2 = generate_long_video(bundle, decoder, scfg, sched)
        paths2 = write_frame_sequence(res2.frames, tmp_path / "run2")
        assert len(paths1) == len(paths2) == 4 * ae_cfg.clip_length
        for a, b in zip(paths1, paths2):
            assert a.read_bytes() == b.read_bytes()


def test_criterion_9_efficiency_claim():
    from pvdiff.diffusion.unet import DenoiserConfig
    from pvdiff.eval.profiler import profile_token_costs
    from pvdiff.models.autoencoder import AutoencoderConfig

    with criterion(9, "analytic cubic:triplane token ratio exactly 8 at paper "
                      "geometry; measured forward >= 2x faster than cubic "
                      "attention reference", budget_s=600):
        ae = AutoencoderConfig(clip_length=16, height=256, width=256, downsample=8,
                               latent_channels=4, patch_h=4, patch_w=4,
                               backbone_width=8, backbone_heads=2,
                               proj_width=8, proj_heads=2)
        den = DenoiserConfig(latent_channels=4, clip_length=16, latent_h=32,
                             latent_w=32, base_channels=32, channel_mult=(1, 2),
                             num_res_blocks=1, attn_factors=(1, 2), num_heads=4)
        report = profile_token_costs(ae, den, measure=True, trials=5)
        assert report.top_level_ratio == 8.0
        assert report.stages[0].attention_flop_ratio == 64.0
        assert report.measured_speedup >= 2.0, (
            f"measured speedup {report.measured_speedup:.2f} < 2.0 "
            f"(triplane {report.triplane_forward_ms:.1f} ms vs cubic "
            f"attention {report.cubic_attention_ms:.1f} ms)")


def test_criterion_10_protocol_fairness():
    from pvdiff.data.datasets import ArrayVideoSource, DatasetHandle
    from pvdiff.data.protocol import eval_clip_protocol

    with criterion(10, "clip protocol video-selection chi-square uniformity "
                       "(alpha = 0.01) on mixed-length corpus", budget_s=60):
        lengths = [16, 32, 64, 500, 16, 48, 16, 128, 16, 16]
        sources = [ArrayVideoSource(f"v{i}", torch.full((3, n, 4, 4), i / 10.0))
                   for i, n in enumerate(lengths)]
        ds = DatasetHandle(sources=sources, clip_length=16, resolution=4, seed=0)
        clips = eval_clip_protocol(ds, 2048, 16, seed=1)
        counts = np.zeros(len(lengths))
        for clip in clips:
            counts[int(round(float(clip.pixels[0, 0, 0, 0]) * 10))] += 1
        chi2, p = scipy.stats.chisquare(counts)
        assert p > 0.01, f"uniformity rejected: p={p:.4f}, counts={counts}"
