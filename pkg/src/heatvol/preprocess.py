"""Subject-centred cropping, temporal sampling, and limb-keypoint dropping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySubjectError
from .rng import make_rng
from .skeleton import SkeletonSequence

DEFAULT_PAD_RATIO = 0.10
MIN_BOX_SIZE = 8.0
SAMPLER_MODES = ("uniform", "fixed_stride", "uniform_deterministic")


@dataclass(frozen=True)
class CropBox:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValueError(f"crop box {self} has zero or negative area")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def as_tuple(self) -> tuple:
        return (self.min_x, self.min_y, self.max_x, self.max_y)


@dataclass(frozen=True)
class SamplerSpec:
    mode: str = "uniform"
    n_frames: int = 32
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SAMPLER_MODES:
            raise ValueError(f"sampler mode must be one of {SAMPLER_MODES}, got {self.mode!r}")
        if self.n_frames < 1:
            raise ValueError("n_frames must be at least 1")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")


def _expand(lo, hi, pad_ratio, min_size):
    span = hi - lo
    lo, hi = lo - pad_ratio * span, hi + pad_ratio * span
    if hi - lo < min_size:
        mid = (lo + hi) / 2
        lo, hi = mid - min_size / 2, mid + min_size / 2
    return lo, hi


def tight_bbox(seq: SkeletonSequence, pad_ratio: float = DEFAULT_PAD_RATIO,
               min_size: float = MIN_BOX_SIZE) -> CropBox:
    """Smallest box around every visible keypoint of the clip, padded and clamped.

    Visible means score > 0. Each side grows by ``pad_ratio`` times the
    box extent on that axis; extents below ``min_size`` grow symmetrically to
    ``min_size``; the result is clamped to ``[0, W] x [0, H]``.
    """
    kp = seq.all_keypoints()
    vis = kp[kp[:, 2] > 0]
    if len(vis) == 0:
        raise EmptySubjectError(f"{seq.video_id}: no visible keypoints to enclose")
    x0, x1 = _expand(vis[:, 0].min(), vis[:, 0].max(), pad_ratio, min_size)
    y0, y1 = _expand(vis[:, 1].min(), vis[:, 1].max(), pad_ratio, min_size)
    x0, x1 = max(0.0, x0), min(float(seq.frame_width), x1)
    y0, y1 = max(0.0, y0), min(float(seq.frame_height), y1)
    if not (x0 < x1 and y0 < y1):
        raise EmptySubjectError(f"{seq.video_id}: visible keypoints lie outside the frame")
    return CropBox(float(x0), float(y0), float(x1), float(y1))


def crop_resize(seq: SkeletonSequence, box: CropBox, target_hw) -> SkeletonSequence:
    """Map keypoints into a ``target_hw`` frame showing only ``box``.

    Axes scale independently (aspect ratio is not preserved). Scores are kept.
    """
    th, tw = target_hw
    if box.width <= 0 or box.height <= 0:
        raise ValueError("crop box has zero area")
    sx = tw / box.width
    sy = th / box.height

    def transform(_, kp):
        kp[..., 0] = (kp[..., 0] - box.min_x) * sx
        kp[..., 1] = (kp[..., 1] - box.min_y) * sy
        return kp

    return seq.map_keypoints(transform).replace(frame_height=th, frame_width=tw)


def segment_bounds(total_frames: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Segment ``i`` covers frames ``[floor(i*T/n), floor((i+1)*T/n))``."""
    i = np.arange(n + 1)
    edges = (i * total_frames) // n
    return edges[:-1], edges[1:]


def uniform_sample(total_frames: int, spec: SamplerSpec) -> list[int]:
    """One frame per equal-length segment.

    Random mode draws uniformly inside each segment; ``uniform_deterministic``
    takes each segment's midpoint. When ``T < n`` some segments are empty and
    fall back to their start frame, so frames repeat.
    """
    if total_frames < 1:
        raise ValueError("total_frames must be at least 1")
    n = spec.n_frames
    lo, hi = segment_bounds(total_frames, n)
    width = np.maximum(hi - lo, 1)
    if spec.mode == "uniform_deterministic":
        idx = lo + (hi - lo) // 2
    else:
        u = make_rng(spec.seed).random(n)
        idx = lo + np.minimum(np.floor(u * width).astype(np.int64), width - 1)
    return [int(min(i, total_frames - 1)) for i in idx]


def window_starts(total_frames: int, clip_len: int, stride: int) -> range:
    """Starts ``s`` whose window ``s, s+stride, ..., s+(clip_len-1)*stride`` fits in T."""
    span = (clip_len - 1) * stride + 1
    return range(0, max(total_frames - span, 0) + 1)


def fixed_stride_sample(total_frames: int, clip_len: int, stride: int, seed: int = 0,
                        start: int | None = None) -> list[int]:
    """Every ``stride``-th frame of one contiguous window.

    The start is drawn uniformly from :func:`window_starts` unless given.
    Windows longer than the video start at 0 and wrap modulo ``T``.
    """
    if total_frames < 1 or clip_len < 1 or stride < 1:
        raise ValueError("total_frames, clip_len and stride must be positive")
    starts = window_starts(total_frames, clip_len, stride)
    if start is None:
        start = int(starts[make_rng(seed).integers(len(starts))])
    return [(start + i * stride) % total_frames for i in range(clip_len)]


def sample_indices(total_frames: int, spec: SamplerSpec) -> list[int]:
    if spec.mode == "fixed_stride":
        return fixed_stride_sample(total_frames, spec.n_frames, spec.stride, spec.seed)
    return uniform_sample(total_frames, spec)


def select_frames(seq: SkeletonSequence, indices) -> SkeletonSequence:
    return seq.replace(frames=tuple(seq.frames[i] for i in indices))


def drop_limb_keypoints(seq: SkeletonSequence, p: float, seed: int) -> SkeletonSequence:
    """Per frame, with probability ``p``, zero the score of one limb joint
    (chosen uniformly from the layout's limb joints) for every person."""
    if not 0 <= p <= 1:
        raise ValueError(f"drop probability must lie in [0, 1], got {p}")
    limb_joints = seq.layout.limb_joint_indices
    if not limb_joints:
        raise ValueError("layout defines no limb joints")
    if p == 0:
        return seq
    rng = make_rng(seed)
    draws = rng.random(seq.num_frames)
    picks = rng.integers(len(limb_joints), size=seq.num_frames)

    def drop(t, kp):
        if draws[t] < p:
            kp[:, limb_joints[picks[t]], 2] = 0.0
        return kp

    return seq.map_keypoints(drop)


def fraction_spanned(indices, total_frames: int) -> float:
    """Share of the video's frame range covered by ``min..max`` of the indices."""
    if total_frames <= 1:
        return 1.0
    return (max(indices) - min(indices)) / (total_frames - 1)


__all__ = [
    "CropBox", "SamplerSpec", "tight_bbox", "crop_resize", "uniform_sample",
    "fixed_stride_sample", "window_starts", "sample_indices", "select_frames",
    "drop_limb_keypoints", "segment_bounds", "fraction_spanned",
]
