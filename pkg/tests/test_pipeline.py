from __future__ import annotations

import numpy as np
import pytest

from heatvol.heatmap import build_volume
from heatvol.pipeline import PipelineConfig, make_batch, make_volume, prepare
from heatvol.preprocess import crop_resize, sample_indices, tight_bbox

from conftest import make_sequence, random_sequence


def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.sigma == 0.6 and cfg.target_hw == (56, 56) and cfg.frames == 32
    assert cfg.gaussian.truncation_radius_sigmas == 6.0


@pytest.mark.parametrize("alias,mode", [("uniform", "uniform"), ("stride", "fixed_stride"),
                                        ("det", "uniform_deterministic")])
def test_sampler_aliases(alias, mode):
    assert PipelineConfig(sampler=alias).sampler_spec(3).mode == mode


def test_config_validation():
    for bad in (dict(sampler="x"), dict(mode="bones"), dict(sigma=-1.0)):
        with pytest.raises(ValueError):
            PipelineConfig(**bad)


def test_to_dict_is_json_friendly():
    d = PipelineConfig(target_hw=(32, 48)).to_dict()
    assert d["target_hw"] == [32, 48] and d["sampler"] == "uniform"


def test_prepare_crops_before_sampling(rng):
    seq = random_sequence(rng, n_frames=40)
    cfg = PipelineConfig(frames=8)
    out = prepare(seq, cfg, seed=4)
    assert out.num_frames == 8 and (out.frame_height, out.frame_width) == (56, 56)
    full = crop_resize(seq, tight_bbox(seq), (56, 56))
    idx = sample_indices(40, cfg.sampler_spec(4))
    for f, i in zip(out.frames, idx):
        assert f == full.frames[i]


def test_prepare_without_crop_resizes_full_frame(rng):
    seq = random_sequence(rng, n_frames=4, height=112, width=224)
    out = prepare(seq, PipelineConfig(crop=False, frames=4, sampler="det"))
    a = np.array(seq.frames[0].keypoints)
    b = np.array(out.frames[0].keypoints)
    np.testing.assert_allclose(b[..., 0], a[..., 0] / 4)
    np.testing.assert_allclose(b[..., 1], a[..., 1] / 2)


def test_empty_subject_falls_back_to_frame():
    seq = make_sequence(np.zeros((5, 1, 17, 3)))
    vol = make_volume(seq, PipelineConfig(frames=4))
    assert vol.dims == (17, 4, 56, 56) and not vol.values.any()


def test_make_volume_matches_manual(rng):
    seq = random_sequence(rng, n_frames=10)
    cfg = PipelineConfig(mode="limb", frames=5)
    manual = build_volume(prepare(seq, cfg, 2), "limb", (56, 56), cfg.gaussian)
    assert make_volume(seq, cfg, 2) == manual


def test_make_batch_shape_and_seeds(rng):
    seqs = [random_sequence(rng, n_frames=20, video_id=f"r{i}") for i in range(3)]
    cfg = PipelineConfig(frames=6, target_hw=(24, 32))
    batch = make_batch(seqs, cfg, [0, 1, 2])
    assert batch.shape == (3, 17, 6, 24, 32) and batch.dtype == np.float32
    np.testing.assert_array_equal(batch[1], make_volume(seqs[1], cfg, 1).values)
