import pytest
import torch

from pvdiff.diffusion.loss import bernoulli_branch_mask, diffusion_loss
from pvdiff.diffusion.schedule import make_linear_schedule, q_sample
from pvdiff.errors import ConfigError
from tests.conftest import finite_diff_check
from tests.test_denoiser import desk_denoiser_config, rand_planes, randomize
from pvdiff.diffusion.unet import DenoiserBundle


@pytest.fixture(scope="module")
def sched():
    return make_linear_schedule(1000, 0.0015, 0.0195)


def make_pair(cfg, batch=2, seed=0, dtype=torch.float32):
    return (rand_planes(cfg, batch, seed, dtype), rand_planes(cfg, batch, seed + 1, dtype))


class TestDiffusionLoss:
    def test_oracle_denoiser_gives_zero_loss(self, sched):
        cfg = desk_denoiser_config()
        pair = make_pair(cfg)
        eps = rand_planes(cfg, batch=2, seed=9)

        def oracle(z_t, cond, t):
            return eps

        t = torch.tensor([10, 700])
        loss = diffusion_loss(oracle, pair, t, eps, 0.5, sched)
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_lambda_near_one_matches_pure_conditional_gradient(self, sched):
        torch.manual_seed(0)
        cfg = desk_denoiser_config(base_channels=8, channel_mult=(1,),
                                   attn_factors=(1,), num_heads=2)
        bundle = randomize(DenoiserBundle(cfg), seed=2)
        pair = make_pair(cfg, batch=1, seed=3)
        eps = rand_planes(cfg, batch=1, seed=4)
        t = torch.tensor([321])

        def grads(lam):
            bundle.zero_grad()
            loss = diffusion_loss(bundle, pair, t, eps, lam, sched)
            loss.backward()
            return torch.cat([p.grad.flatten() for p in bundle.parameters()
                              if p.grad is not None]).clone()

        g_joint = grads(1 - 1e-9)
        bundle.zero_grad()
        z_t = q_sample(pair[1], 321, eps, sched)
        cond_out = bundle(z_t, pair[0], t)
        num = sum((e - o).pow(2).sum() for e, o in zip(eps, cond_out))
        den = sum(e.numel() for e in eps)
        (num / den).backward()
        g_cond = torch.cat([p.grad.flatten() for p in bundle.parameters()
                            if p.grad is not None])
        rel = (g_joint - g_cond).norm() / g_cond.norm().clamp_min(1e-12)
        assert rel.item() < 1e-6

    def test_lambda_out_of_range_rejected(self, sched):
        cfg = desk_denoiser_config()
        pair = make_pair(cfg)
        eps = rand_planes(cfg, seed=5)
        for lam in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ConfigError):
                diffusion_loss(lambda *a: eps, pair, torch.tensor([1, 2]), eps,
                               lam, sched)

    def test_both_branches_weighting(self, sched):
        # stub: conditional branch perfect, null branch off by exactly 1
        cfg = desk_denoiser_config()
        pair = make_pair(cfg, batch=4, seed=6)
        eps = rand_planes(cfg, batch=4, seed=7)

        def stub(z_t, cond, t):
            if cond is None or all(float(c.abs().max()) == 0 for c in cond):
                return tuple(e + 1.0 for e in eps)
            return eps

        for lam in (0.25, 0.5, 0.9):
            loss = diffusion_loss(stub, pair, torch.tensor([5, 6, 7, 8]), eps,
                                  lam, sched)
            assert loss.item() == pytest.approx(1.0 - lam, rel=1e-6)

    def test_bernoulli_mode_expectation(self, sched):
        # per-example branch selection: loss equals the null fraction
        cfg = desk_denoiser_config()
        lam = 0.7
        g = torch.Generator().manual_seed(0)
        total_cond = 0
        total = 0
        for rep in range(100):
            batch = 100
            pair = make_pair(cfg, batch=batch, seed=rep)
            eps = rand_planes(cfg, batch=batch, seed=1000 + rep)

            def stub(z_t, cond, t):
                # cond plane is zero for null-branch examples
                mask = (cond[0].flatten(1).abs().amax(dim=1) > 0)
                bumps = tuple((~mask).float().view(-1, 1, 1, 1) + e for e in eps)
                return bumps

            mask = bernoulli_branch_mask(lam, batch, g)
            loss = diffusion_loss(stub, pair, torch.full((batch,), 50), eps, lam,
                                  sched, joint_mode="bernoulli", branch_mask=mask)
            total_cond += int(mask.sum())
            total += batch
            got_null_frac = loss.item()
            want_null_frac = float((~mask).float().mean())
            assert got_null_frac == pytest.approx(want_null_frac, abs=1e-5)
        # empirical conditional frequency over 10^4 draws within 3 sigma
        p_hat = total_cond / total
        sigma = (lam * (1 - lam) / total) ** 0.5
        assert abs(p_hat - lam) < 3 * sigma

    def test_gradients_match_finite_differences(self, sched):
        torch.manual_seed(0)
        cfg = desk_denoiser_config(latent_channels=2, clip_length=2, latent_h=2,
                                   latent_w=2, base_channels=8,
                                   channel_mult=(1,), attn_factors=(1,),
                                   num_heads=2, num_res_blocks=1)
        bundle = DenoiserBundle(cfg).double()
        randomize(bundle, seed=11)
        bundle.double()
        pair = make_pair(cfg, batch=1, seed=12, dtype=torch.float64)
        eps = rand_planes(cfg, batch=1, seed=13, dtype=torch.float64)
        t = torch.tensor([77])
        params = list(bundle.parameters())

        def loss_fn():
            return diffusion_loss(bundle, pair, t, eps, 0.4, sched)

        finite_diff_check(loss_fn, params, n_coords=150, h=1e-5,
                          rel_tol=1e-3, min_frac=0.95)


def test_branch_mask_frequencies():
    g = torch.Generator().manual_seed(1)
    lam = 0.3
    n = 10_000
    mask = bernoulli_branch_mask(lam, n, g)
    p_hat = mask.float().mean().item()
    sigma = (lam * (1 - lam) / n) ** 0.5
    assert abs(p_hat - lam) < 3 * sigma
