import numpy as np
import pytest
import torch

from pvdiff.data.synthetic import (SyntheticSpec, bounce_path, generate_synthetic_dataset,
                                   motion_energy, render_video, spec_from_manifest,
                                   spec_to_manifest)
from pvdiff.errors import ConfigError, DataError


def reference_bounce(start, v, size, extent, n):
    """Straight-line oracle: step, reflect overshoot, flip velocity."""
    limit = extent - size
    pos = [start]
    p = start
    for _ in range(n - 1):
        p = p + v
        if p < 0:
            p, v = -p, -v
        elif p > limit:
            p, v = 2 * limit - p, -v
        pos.append(p)
    return pos


def test_bounce_matches_hand_simulation():
    # velocity (2, 1) px/frame from a corner start, long enough to reflect
    for start, v in [(0.0, 2.0), (10.0, 1.0), (40.0, -2.0)]:
        got = bounce_path(start, v, size=12.0, extent=64.0, n_frames=60)
        want = reference_bounce(start, v, 12.0, 64.0, 60)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
        assert got.min() >= 0.0 and got.max() <= 64.0 - 12.0


def test_bounce_hand_computed_prefix():
    # start 46, v 2, limit 64-12=52: 46,48,50,52, then reflect: 52->54 folds to 50
    got = bounce_path(46.0, 2.0, 12.0, 64.0, 8)
    np.testing.assert_allclose(got, [46, 48, 50, 52, 50, 48, 46, 44], atol=1e-12)


def test_rendered_square_follows_its_path():
    spec = SyntheticSpec(count=1, clip_length=8, resolution=64, seed=3,
                         min_shapes=1, max_shapes=1, min_speed=2.0, max_speed=2.0)
    frames, shapes, bg = render_video(spec, 0)
    assert frames.shape == (16, 3, 64, 64)
    shape = shapes[0]
    # difference from background marks the shape; its bounding box tracks the path
    for t in [0, 5, 10, 15]:
        mask = (np.abs(frames[t] - bg[:, None, None]) > 0.05).any(axis=0)
        ys, xs = np.where(mask)
        assert abs(ys.min() - shape.path[t, 0]) <= 1.0
        assert abs(xs.min() - shape.path[t, 1]) <= 1.0


def test_generation_bitwise_deterministic():
    spec = SyntheticSpec(count=4, clip_length=8, resolution=64, seed=0)
    a = generate_synthetic_dataset(spec)
    b = generate_synthetic_dataset(spec)
    assert len(a) == len(b)
    for i in range(len(a)):
        assert torch.equal(a.clip(i).pixels, b.clip(i).pixels)


def test_zero_velocity_rejected_by_motion_floor():
    spec = SyntheticSpec(count=1, clip_length=8, resolution=64, seed=0,
                         min_speed=0.0, max_speed=0.0)
    with pytest.raises(DataError):
        generate_synthetic_dataset(spec)


def test_motion_energy_static_is_zero():
    frames = np.ones((8, 3, 16, 16), dtype=np.float32) * 0.25
    assert motion_energy(frames) == 0.0


def test_all_clips_in_range_and_moving():
    spec = SyntheticSpec(count=6, clip_length=8, resolution=64, seed=7)
    ds = generate_synthetic_dataset(spec)
    for i in range(len(ds)):
        clip = ds.clip(i)
        assert clip.pixels.min() >= -1.0 and clip.pixels.max() <= 1.0
        assert motion_energy(clip.pixels.permute(1, 0, 2, 3).numpy()) >= spec.motion_floor


def test_manifest_roundtrip():
    spec = SyntheticSpec(count=5, clip_length=8, resolution=64, seed=11,
                         frames_per_video=24, min_speed=1.5, max_speed=2.5)
    text = spec_to_manifest(spec)
    assert "kind: pvdiff-synthetic-v1" in text
    assert spec_from_manifest(text) == spec


def test_invalid_specs_rejected():
    with pytest.raises(ConfigError):
        SyntheticSpec(count=0, clip_length=8, resolution=64, seed=0)
    with pytest.raises(ConfigError):
        SyntheticSpec(count=1, clip_length=8, resolution=64, seed=0,
                      min_shapes=3, max_shapes=2)
    with pytest.raises(ConfigError):
        bounce_path(start=100.0, velocity=1.0, size=12.0, extent=64.0, n_frames=4)
