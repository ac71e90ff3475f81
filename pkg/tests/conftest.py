from __future__ import annotations

import numpy as np
import pytest

from heatvol.skeleton import PoseFrame, SkeletonSequence, coco17_layout


def make_sequence(keypoints, video_id="v0", height=240, width=320, label=None):
    """Sequence from a ``(T, P, K, 3)`` array-like."""
    frames = tuple(PoseFrame(np.asarray(f, dtype=np.float64).reshape(-1, 17, 3))
                   for f in keypoints)
    return SkeletonSequence(video_id, height, width, frames, coco17_layout(), label)


def random_sequence(rng, n_frames=5, n_persons=2, height=240, width=320, video_id="r0",
                    label=None):
    kp = np.empty((n_frames, n_persons, 17, 3))
    kp[..., 0] = rng.uniform(0, width, kp.shape[:3])
    kp[..., 1] = rng.uniform(0, height, kp.shape[:3])
    kp[..., 2] = rng.uniform(0.05, 1.0, kp.shape[:3])
    return make_sequence(kp, video_id, height, width, label)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
