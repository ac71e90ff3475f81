from __future__ import annotations

import numpy as np
import pytest

from heatvol.net3d import build_pose_slowonly
from heatvol.net3d.predict import clip_logits, multi_clip_predict
from heatvol.pipeline import PipelineConfig, make_volume

from conftest import random_sequence

CFG = PipelineConfig(frames=2, target_hw=(8, 8))


def net():
    return build_pose_slowonly(base_channels=2, frames=2, size=8, num_classes=3, seed=0)


def test_multi_clip_is_mean_of_clips(rng):
    seq, n = random_sequence(rng, n_frames=30), net()
    rows = clip_logits(n, seq, 4, CFG, seed=10)
    assert rows.shape == (4, 3)
    np.testing.assert_allclose(multi_clip_predict(n, seq, 4, CFG, seed=10), rows.mean(axis=0))


def test_clip_seeds(rng):
    seq, n = random_sequence(rng, n_frames=30), net()
    rows = clip_logits(n, seq, 2, CFG, seeds=[7, 3])
    single = n.forward(make_volume(seq, CFG, 3).values[None])
    np.testing.assert_allclose(rows[1], single[0], rtol=1e-5)


def test_identical_seeds_match_single_clip(rng):
    seq, n = random_sequence(rng, n_frames=30), net()
    one = multi_clip_predict(n, seq, 1, CFG, seeds=[4])
    many = multi_clip_predict(n, seq, 5, CFG, seeds=[4] * 5)
    np.testing.assert_allclose(many, one, rtol=1e-6)


def test_bad_clip_arguments(rng):
    seq = random_sequence(rng)
    with pytest.raises(ValueError):
        clip_logits(net(), seq, 0, CFG)
    with pytest.raises(ValueError):
        clip_logits(net(), seq, 2, CFG, seeds=[1])
