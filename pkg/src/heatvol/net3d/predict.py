"""Multi-clip inference over one skeleton sequence."""

from __future__ import annotations

import numpy as np

from ..pipeline import PipelineConfig, make_volume


def clip_logits(net, seq, clips: int, pipeline: PipelineConfig, seeds=None,
                seed: int = 0) -> np.ndarray:
    """``(clips, num_classes)`` logits, one row per independently sampled clip."""
    if clips < 1:
        raise ValueError("clips must be at least 1")
    seeds = list(seeds) if seeds is not None else [seed + i for i in range(clips)]
    if len(seeds) != clips:
        raise ValueError(f"{len(seeds)} seeds given for {clips} clips")
    x = np.stack([make_volume(seq, pipeline, int(s)).values for s in seeds])
    net.eval()
    return np.asarray(net.forward(x))


def multi_clip_predict(net, seq, clips: int, pipeline: PipelineConfig, seeds=None,
                       seed: int = 0) -> np.ndarray:
    """Mean logits over ``clips`` clips; clip ``i`` uses ``seeds[i]`` (default ``seed + i``)."""
    return clip_logits(net, seq, clips, pipeline, seeds, seed).mean(axis=0)
