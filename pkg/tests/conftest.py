import numpy as np
import pytest
import torch

from pvdiff.config import config_from_dict


def pytest_configure(config):
    torch.manual_seed(0)


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(1234)
    yield


def finite_diff_check(loss_fn, params, n_coords=200, h=1e-5, rel_tol=1e-3,
                      min_frac=0.95, seed=0, abs_floor=1e-7):
    """Central-difference gradient check on randomly sampled coordinates.

    loss_fn is a nullary callable returning a scalar tensor built from
    `params` (double precision). Passes if at least min_frac of the
    sampled coordinates agree with autograd within rel_tol (with a small
    absolute floor for near-zero gradients).
    """
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.Generator(np.random.PCG64(seed))
    n = min(n_coords, total)
    coords = rng.choice(total, size=n, replace=False)
    bounds = np.cumsum([0] + sizes)
    ok = 0
    failures = []
    for c in sorted(coords.tolist()):
        pi = int(np.searchsorted(bounds, c, side="right") - 1)
        j = c - bounds[pi]
        p = params[pi]
        with torch.no_grad():
            flat = p.view(-1)
            orig = flat[j].item()
            flat[j] = orig + h
            lp = float(loss_fn())
            flat[j] = orig - h
            lm = float(loss_fn())
            flat[j] = orig
        fd = (lp - lm) / (2.0 * h)
        g = grads[pi]
        ag = 0.0 if g is None else float(g.reshape(-1)[j])
        if abs(fd - ag) <= rel_tol * max(abs(fd), abs(ag)) + abs_floor:
            ok += 1
        else:
            failures.append((pi, int(j), fd, ag))
    frac = ok / n
    assert frac >= min_frac, (
        f"finite-difference agreement {frac:.3f} < {min_frac}; "
        f"first failures: {failures[:5]}")
    return frac


@pytest.fixture(scope="session")
def desk_ae_run(tmp_path_factory):
    """Train the desk autoencoder once per session (drives several tests)."""
    from pvdiff.train.ae import train_autoencoder

    cfg = config_from_dict({"preset": "desk-overfit", "run_name": "ae-fixture"})
    run_dir = tmp_path_factory.mktemp("ae_run")
    summary = train_autoencoder(cfg, run_dir)
    return {"cfg": cfg, "run_dir": run_dir, "summary": summary}


@pytest.fixture(scope="session")
def desk_diffusion_run(desk_ae_run, tmp_path_factory):
    """Train the desk denoiser on a 16-clip subset, reusing the session AE."""
    from pvdiff.train.diffusion import train_diffusion

    cfg = config_from_dict({"preset": "desk-overfit", "run_name": "diff-fixture",
                            "data": {"count": 8}})
    run_dir = tmp_path_factory.mktemp("diff_run")
    summary = train_diffusion(cfg, desk_ae_run["summary"]["best_checkpoint"], run_dir)
    return {"cfg": cfg, "run_dir": run_dir, "summary": summary,
            "ae_checkpoint": desk_ae_run["summary"]["best_checkpoint"]}
