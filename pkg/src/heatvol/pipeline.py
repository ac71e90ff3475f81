"""Coordinates-to-volume pipeline: crop, then sample frames, then rasterize."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptySubjectError
from .heatmap import GaussianConfig, HeatmapVolume, build_volume
from .preprocess import (
    CropBox,
    SamplerSpec,
    crop_resize,
    sample_indices,
    select_frames,
    tight_bbox,
)
from .skeleton import SkeletonSequence

SAMPLER_ALIASES = {
    "uniform": "uniform",
    "stride": "fixed_stride",
    "fixed_stride": "fixed_stride",
    "det": "uniform_deterministic",
    "uniform_deterministic": "uniform_deterministic",
}


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "joint"
    sigma: float = 0.6
    truncation_radius_sigmas: float = 6.0
    crop: bool = True
    pad_ratio: float = 0.10
    target_hw: tuple = (56, 56)
    frames: int = 32
    sampler: str = "uniform"
    stride: int = 2

    def __post_init__(self):
        if self.sampler not in SAMPLER_ALIASES:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.mode not in ("joint", "limb"):
            raise ValueError(f"mode must be 'joint' or 'limb', got {self.mode!r}")
        object.__setattr__(self, "target_hw", tuple(int(v) for v in self.target_hw))
        self.gaussian  # validates sigma and radius

    @property
    def gaussian(self) -> GaussianConfig:
        return GaussianConfig(self.sigma, self.truncation_radius_sigmas)

    def sampler_spec(self, seed: int) -> SamplerSpec:
        return SamplerSpec(SAMPLER_ALIASES[self.sampler], self.frames, self.stride, seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["target_hw"] = list(self.target_hw)
        return d


def frame_box(seq: SkeletonSequence) -> CropBox:
    return CropBox(0.0, 0.0, float(seq.frame_width), float(seq.frame_height))


def prepare(seq: SkeletonSequence, cfg: PipelineConfig, seed: int = 0) -> SkeletonSequence:
    """Crop (or just resize) to the target size, then keep the sampled frames."""
    box = frame_box(seq)
    if cfg.crop:
        try:
            box = tight_bbox(seq, cfg.pad_ratio)
        except EmptySubjectError:
            pass
    seq = crop_resize(seq, box, cfg.target_hw)
    return select_frames(seq, sample_indices(seq.num_frames, cfg.sampler_spec(seed)))


def make_volume(seq: SkeletonSequence, cfg: PipelineConfig, seed: int = 0) -> HeatmapVolume:
    return build_volume(prepare(seq, cfg, seed), cfg.mode, cfg.target_hw, cfg.gaussian)


def make_batch(seqs, cfg: PipelineConfig, seeds) -> np.ndarray:
    """``(N, K, T, H, W)`` float32 network input."""
    return np.stack([make_volume(s, cfg, int(sd)).values for s, sd in zip(seqs, seeds)])
