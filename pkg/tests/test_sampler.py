import math

import numpy as np
import pytest
import torch

from pvdiff.diffusion.schedule import make_linear_schedule, q_sample
from pvdiff.errors import ConfigError, GeometryError
from pvdiff.sampler import (SAMPLER_PRESETS, SamplerConfig, clip_generator_seed,
                            ddim_step, ddim_steps, ddpm_step, generate_long_video,
                            sample_clip)


@pytest.fixture(scope="module")
def sched():
    return make_linear_schedule(1000, 0.0015, 0.0195)


class TestDdpmStep:
    def test_scalar_hand_case(self):
        # T=1, beta=0.5: z0 = (1 - 0.5/sqrt(0.5)) / sqrt(0.5) = sqrt(2) - 1
        s = make_linear_schedule(1, 0.5, 0.5)
        z = torch.tensor([1.0], dtype=torch.float64)
        eps = torch.tensor([1.0], dtype=torch.float64)
        out = ddpm_step(z, eps, 1, s, noise=None)
        assert out.item() == pytest.approx(math.sqrt(2) - 1, abs=1e-12)

    def test_tiny_beta_is_near_identity(self):
        s = make_linear_schedule(1, 1e-12, 1e-12)
        z = torch.tensor([0.3, -0.7])
        eps = torch.tensor([1.0, 1.0])
        out = ddpm_step(z, eps, 1, s, noise=None)
        assert (out - z).abs().max().item() < 1e-5

    def test_affine_superposition(self, sched):
        g = torch.Generator().manual_seed(0)
        t = 500
        mk = lambda: torch.randn(2, 3, 4, 4, generator=g, dtype=torch.float64)
        z1, z2, e1, e2, n1, n2 = (mk() for _ in range(6))
        lhs = ddpm_step(z1 + z2, e1 + e2, t, sched, n1 + n2)
        rhs_a = ddpm_step(z1, e1, t, sched, n1)
        rhs_b = ddpm_step(z2, e2, t, sched, n2)
        # affine in (z, eps, noise): f(a+b) = f(a) + f(b) because the map is
        # linear with no constant term
        assert torch.allclose(lhs, rhs_a + rhs_b, atol=1e-9)

    def test_final_step_rejects_noise(self, sched):
        z = torch.zeros(4)
        with pytest.raises(ConfigError):
            ddpm_step(z, z, 1, sched, noise=torch.ones(4))
        ddpm_step(z, z, 1, sched, noise=torch.zeros(4))

    def test_planewise_application(self, sched):
        planes = tuple(torch.randn(1, 2, 3, 3) for _ in range(3))
        eps = tuple(torch.randn(1, 2, 3, 3) for _ in range(3))
        out = ddpm_step(planes, eps, 10, sched, None)
        assert len(out) == 3
        for o, p in zip(out, planes):
            assert o.shape == p.shape


class TestDdimStep:
    def test_x0_recovery_with_true_noise(self, sched):
        g = torch.Generator().manual_seed(1)
        z0 = torch.randn(3, 5, generator=g, dtype=torch.float64)
        eps = torch.randn(3, 5, generator=g, dtype=torch.float64)
        for t in (1, 250, 1000):
            z_t = q_sample(z0, t, eps, sched)
            out = ddim_step(z_t, eps, t, 0, sched, eta=0.0)
            assert (out - z0).abs().max().item() < 1e-10

    def test_deterministic_at_eta_zero(self, sched):
        z = torch.randn(2, 4)
        e = torch.randn(2, 4)
        a = ddim_step(z, e, 600, 400, sched, eta=0.0)
        b = ddim_step(z, e, 600, 400, sched, eta=0.0)
        assert torch.equal(a, b)

    def test_eta_one_from_t1_matches_ddpm(self, sched):
        # both are the same deterministic map at the final step
        z = torch.randn(8, dtype=torch.float64)
        e = torch.randn(8, dtype=torch.float64)
        a = ddim_step(z, e, 1, 0, sched, eta=1.0)
        b = ddpm_step(z, e, 1, sched, noise=None)
        assert torch.allclose(a, b, atol=1e-12)

    def test_eta_one_zero_noise_equals_zero_noise_ddpm_all_t(self, sched):
        # the ancestral update and the posterior-matched few-step update
        # coincide exactly once their injected noises are both removed
        g = torch.Generator().manual_seed(2)
        z = torch.randn(16, generator=g, dtype=torch.float64)
        e = torch.randn(16, generator=g, dtype=torch.float64)
        for t in (2, 77, 500, 1000):
            a = ddim_step(z, e, t, t - 1, sched, eta=1.0,
                          noise=torch.zeros_like(z))
            b = ddpm_step(z, e, t, sched,
                          noise=None if t == 1 else torch.zeros_like(z))
            assert torch.allclose(a, b, atol=1e-12), f"t={t}"

    def test_eta_zero_differs_from_zero_noise_ddpm(self, sched):
        # eta=0 is a different deterministic map; document the distinction
        z = torch.ones(1, dtype=torch.float64)
        e = torch.ones(1, dtype=torch.float64)
        a = ddim_step(z, e, 500, 499, sched, eta=0.0)
        b = ddpm_step(z, e, 500, sched, noise=torch.zeros(1, dtype=torch.float64))
        assert (a - b).abs().max() > 1e-6

    def test_step_ordering_enforced(self, sched):
        z = torch.zeros(2)
        with pytest.raises(ConfigError):
            ddim_step(z, z, 10, 10, sched)
        with pytest.raises(ConfigError):
            ddim_step(z, z, 10, 11, sched)

    def test_stochastic_step_requires_noise(self, sched):
        z = torch.zeros(2)
        with pytest.raises(ConfigError):
            ddim_step(z, z, 10, 5, sched, eta=0.5)


class TestStepSubsequence:
    def test_full_and_partial(self):
        assert ddim_steps(10, 10) == list(range(1, 11))
        seq = ddim_steps(1000, 100)
        assert seq[0] == 1 and seq[-1] == 1000 and len(seq) == 100
        assert all(b > a for a, b in zip(seq, seq[1:]))

    def test_single_step_starts_at_T(self):
        assert ddim_steps(1000, 1) == [1000]

    def test_bounds(self):
        with pytest.raises(ConfigError):
            ddim_steps(10, 11)
        with pytest.raises(ConfigError):
            ddim_steps(10, 0)


class TestSampleClip:
    def test_oracle_denoiser_returns_planted_z0(self, sched):
        # a stub that always reports the exact noise for a planted z0 makes
        # eta=0 sampling land on the plant from any z_T and any step count
        g = torch.Generator().manual_seed(3)
        shapes = ((2, 3, 3), (2, 4, 3), (2, 4, 3))
        plant = tuple(torch.randn(1, *s, generator=g, dtype=torch.float64)
                      for s in shapes)

        def oracle(z_t, cond, t):
            ti = int(t[0])
            ab = sched.alpha_bar(ti)
            return tuple((z - math.sqrt(ab) * p) / math.sqrt(1 - ab)
                         for z, p in zip(z_t, plant))

        for steps in (3, 10, 50):
            out = sample_clip(oracle, sched, None, steps, mode="ddim", seed=0,
                              plane_shapes=shapes)
            for o, p in zip(out, plant):
                assert (o.double() - p).abs().max().item() < 1e-4, steps

    def test_same_seed_same_latents(self, sched):
        shapes = ((2, 3, 3), (2, 4, 3), (2, 4, 3))

        def stub(z_t, cond, t):
            return tuple(0.1 * z for z in z_t)

        a = sample_clip(stub, sched, None, 10, mode="ddim", seed=7,
                        plane_shapes=shapes)
        b = sample_clip(stub, sched, None, 10, mode="ddim", seed=7,
                        plane_shapes=shapes)
        for x, y in zip(a, b):
            assert torch.equal(x, y)

    def test_ddpm_full_schedule_and_eta_one_shapes(self):
        s = make_linear_schedule(10, 0.01, 0.1)
        shapes = ((1, 2, 2), (1, 2, 2), (1, 2, 2))

        def stub(z_t, cond, t):
            return tuple(torch.zeros_like(z) for z in z_t)

        for mode, eta in (("ddpm", 0.0), ("ddim", 1.0)):
            out = sample_clip(stub, s, None, 10, mode=mode, seed=1, eta=eta,
                              plane_shapes=shapes)
            for o, sh in zip(out, shapes):
                assert o.shape == (1,) + sh

    def test_ddpm_partial_steps_rejected(self, sched):
        shapes = ((1, 2, 2),) * 3

        def stub(z_t, cond, t):
            return z_t

        with pytest.raises(ConfigError):
            sample_clip(stub, sched, None, 10, mode="ddpm", plane_shapes=shapes)


class TestSamplerConfig:
    def test_presets_exposed_verbatim(self):
        assert SAMPLER_PRESETS["100/20-s"] == {"mode": "ddim", "steps_init": 100,
                                               "steps_cond": 20}
        assert SAMPLER_PRESETS["200/200-s"]["steps_cond"] == 200
        assert SAMPLER_PRESETS["400/400-s"]["steps_init"] == 400
        for preset in SAMPLER_PRESETS.values():
            SamplerConfig(**preset)  # all valid

    def test_validation(self):
        with pytest.raises(ConfigError):
            SamplerConfig(mode="euler")
        with pytest.raises(ConfigError):
            SamplerConfig(clips=0)
        with pytest.raises(ConfigError):
            SamplerConfig(eta=1.5)
        cfg = SamplerConfig(steps_init=2000)
        with pytest.raises(ConfigError):
            cfg.validate_against(make_linear_schedule(1000, 0.001, 0.02))


class _StubDecoderCfg:
    def __init__(self, c, s, h, w):
        self.latent_channels = c
        self.clip_length = s
        self.latent_h = h
        self.latent_w = w


class _StubDecoder:
    """Maps latent planes to a deterministic 'video' for chaining tests."""

    def __init__(self, c=2, s=4, h=3, w=3, pixel=8):
        self.cfg = _StubDecoderCfg(c, s, h, w)
        self.pixel = pixel

    def __call__(self, planes):
        b = planes[0].shape[0]
        s = self.cfg.clip_length
        mean = sum(p.mean() for p in planes) / 3
        out = torch.full((b, 3, s, self.pixel, self.pixel), float(mean))
        return out.clamp(-1, 1)


class _StubBundleCfg(_StubDecoderCfg):
    def plane_shapes(self, factor=1):
        return ((self.latent_h, self.latent_w),
                (self.clip_length, self.latent_w),
                (self.clip_length, self.latent_h))


class _StubBundle:
    def __init__(self, c=2, s=4, h=3, w=3):
        self.cfg = _StubBundleCfg(c, s, h, w)
        self.calls = []

    def __call__(self, z_t, cond, t):
        self.calls.append((None if cond is None else tuple(c.clone() for c in cond),
                           int(t[0])))
        return tuple(0.5 * z for z in z_t)


class TestGenerateLongVideo:
    def test_single_clip_degenerate_chain(self):
        sched = make_linear_schedule(50, 0.001, 0.05)
        bundle, dec = _StubBundle(), _StubDecoder()
        cfg = SamplerConfig(mode="ddim", steps_init=10, steps_cond=5, clips=1, seed=3)
        res = generate_long_video(bundle, dec, cfg, sched)
        assert res.frames.shape == (3, 4, 8, 8)
        assert res.trace[0].cond_source == "null"

    def test_chained_conditioning_bit_matches(self):
        sched = make_linear_schedule(50, 0.001, 0.05)
        bundle, dec = _StubBundle(), _StubDecoder()
        cfg = SamplerConfig(mode="ddim", steps_init=10, steps_cond=5, clips=4, seed=3)
        res = generate_long_video(bundle, dec, cfg, sched)
        assert res.frames.shape == (3, 16, 8, 8)
        for ell in range(1, 4):
            cond = res.trace[ell].cond
            prev_z0 = res.trace[ell - 1].z0
            for c, z in zip(cond, prev_z0):
                assert torch.equal(c, z)
        # step counts follow N for the first clip, M afterwards
        assert res.trace[0].steps == 10
        assert all(tr.steps == 5 for tr in res.trace[1:])

    def test_markov_locality_of_conditioning(self):
        # every denoiser call during clip l uses either null or clip l-1's z0
        sched = make_linear_schedule(50, 0.001, 0.05)
        bundle, dec = _StubBundle(), _StubDecoder()
        cfg = SamplerConfig(mode="ddim", steps_init=4, steps_cond=3, clips=3, seed=5)
        res = generate_long_video(bundle, dec, cfg, sched)
        calls = bundle.calls
        assert len(calls) == 4 + 3 + 3
        for cond, _ in calls[:4]:
            assert cond is None
        for idx, (cond, _) in enumerate(calls[4:7]):
            for c, z in zip(cond, res.trace[0].z0):
                assert torch.equal(c, z)
        for cond, _ in calls[7:]:
            for c, z in zip(cond, res.trace[1].z0):
                assert torch.equal(c, z)

    def test_seed_split_prefix_property(self):
        sched = make_linear_schedule(50, 0.001, 0.05)
        cfg2 = SamplerConfig(mode="ddim", steps_init=6, steps_cond=4, clips=2, seed=11)
        cfg3 = SamplerConfig(mode="ddim", steps_init=6, steps_cond=4, clips=3, seed=11)
        r2 = generate_long_video(_StubBundle(), _StubDecoder(), cfg2, sched)
        r3 = generate_long_video(_StubBundle(), _StubDecoder(), cfg3, sched)
        for a, b in zip(r2.latents, r3.latents[:2]):
            for x, y in zip(a, b):
                assert torch.equal(x, y)
        assert torch.equal(r2.frames, r3.frames[:, :8])

    def test_geometry_mismatch_rejected(self):
        sched = make_linear_schedule(50, 0.001, 0.05)
        bundle = _StubBundle(s=4)
        dec = _StubDecoder(s=8)
        cfg = SamplerConfig(mode="ddim", steps_init=4, steps_cond=4, clips=2)
        with pytest.raises(GeometryError):
            generate_long_video(bundle, dec, cfg, sched)

    def test_clip_seed_derivation_stable(self):
        a = clip_generator_seed(42, 1)
        b = clip_generator_seed(42, 1)
        c = clip_generator_seed(42, 2)
        d = clip_generator_seed(43, 1)
        assert a == b and a != c and a != d
