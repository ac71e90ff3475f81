"""Joint and limb pseudo-heatmaps from keypoint coordinates.

A joint at ``(x, y)`` with confidence ``c`` contributes
``c * exp(-((i - x)^2 + (j - y)^2) / (2 sigma^2))`` at column ``i``, row ``j``.
A limb between joints ``a`` and ``b`` contributes
``min(c_a, c_b) * exp(-d^2 / (2 sigma^2))`` with ``d`` the distance from the
pixel to the segment. Persons are merged with a pointwise maximum, so every
map stays in ``[0, 1]``. Frames are stacked into ``(K, T, H, W)`` volumes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .skeleton import PoseFrame, SkeletonSequence

KINDS = ("joint", "limb")


@dataclass(frozen=True)
class GaussianConfig:
    sigma: float = 0.6
    truncation_radius_sigmas: float = 6.0
    score_epsilon: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.truncation_radius_sigmas >= 3:
            raise ValueError("truncation_radius_sigmas must be at least 3")
        if not 0 <= self.score_epsilon < 1:
            raise ValueError("score_epsilon must lie in [0, 1)")

    @property
    def radius(self) -> float:
        return self.truncation_radius_sigmas * self.sigma


def point_segment_distance(p, a, b) -> float:
    """Euclidean distance from point ``p`` to the closed segment ``[a, b]``."""
    px, py = map(float, p)
    ax, ay = map(float, a)
    bx, by = map(float, b)
    dx, dy = bx - ax, by - ay
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / len2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _segment_dist2(xs, ys, ax, ay, bx, by):
    """Squared distance from grid points to segment ``[a, b]`` (broadcasting)."""
    dx, dy = bx - ax, by - ay
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return (xs - ax) ** 2 + (ys - ay) ** 2
    t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / len2, 0.0, 1.0)
    return (xs - (ax + t * dx)) ** 2 + (ys - (ay + t * dy)) ** 2


def _window(lo, hi, size):
    a = max(0, math.ceil(lo))
    b = min(size - 1, math.floor(hi))
    return a, b


def _splat_joint(out, x, y, c, cfg):
    h, w = out.shape
    r = cfg.radius
    c0, c1 = _window(x - r, x + r, w)
    r0, r1 = _window(y - r, y + r, h)
    if c0 > c1 or r0 > r1:
        return
    xs = np.arange(c0, c1 + 1, dtype=np.float64)[None, :]
    ys = np.arange(r0, r1 + 1, dtype=np.float64)[:, None]
    d2 = (xs - x) ** 2 + (ys - y) ** 2
    v = np.exp(-d2 / (2 * cfg.sigma ** 2)) * c
    v[d2 > r * r] = 0.0
    patch = out[r0:r1 + 1, c0:c1 + 1]
    np.maximum(patch, v, out=patch)


def _splat_limb(out, ax, ay, bx, by, c, cfg):
    h, w = out.shape
    r = cfg.radius
    c0, c1 = _window(min(ax, bx) - r, max(ax, bx) + r, w)
    r0, r1 = _window(min(ay, by) - r, max(ay, by) + r, h)
    if c0 > c1 or r0 > r1:
        return
    xs = np.arange(c0, c1 + 1, dtype=np.float64)[None, :]
    ys = np.arange(r0, r1 + 1, dtype=np.float64)[:, None]
    d2 = _segment_dist2(xs, ys, ax, ay, bx, by)
    v = np.exp(-d2 / (2 * cfg.sigma ** 2)) * c
    v[d2 > r * r] = 0.0
    patch = out[r0:r1 + 1, c0:c1 + 1]
    np.maximum(patch, v, out=patch)


def _check_size(height, width):
    if height < 1 or width < 1:
        raise ValueError(f"heatmap size must be at least 1x1, got {height}x{width}")


def joint_map(frame: PoseFrame, joint_index: int, height: int, width: int,
              cfg: GaussianConfig = GaussianConfig()) -> np.ndarray:
    """``(height, width)`` float64 Gaussian map of one joint over all persons."""
    _check_size(height, width)
    if not 0 <= joint_index < frame.num_joints:
        raise IndexError(f"joint index {joint_index} out of range for {frame.num_joints} joints")
    out = np.zeros((height, width))
    for x, y, c in frame.keypoints[:, joint_index]:
        if c > cfg.score_epsilon:
            _splat_joint(out, x, y, c, cfg)
    return out


def limb_map(frame: PoseFrame, limb, height: int, width: int,
             cfg: GaussianConfig = GaussianConfig()) -> np.ndarray:
    """``(height, width)`` float64 map of the segment between joints ``limb = (a, b)``."""
    _check_size(height, width)
    a, b = limb
    if a == b or min(a, b) < 0 or max(a, b) >= frame.num_joints:
        raise IndexError(f"invalid limb {limb!r}")
    out = np.zeros((height, width))
    for person in frame.keypoints:
        (ax, ay, ca), (bx, by, cb) = person[a], person[b]
        c = min(ca, cb)
        if c > cfg.score_epsilon:
            _splat_limb(out, ax, ay, bx, by, c, cfg)
    return out


def naive_joint_map(frame, joint_index, height, width, cfg=GaussianConfig()):
    """Full-frame reference rasterizer (no support truncation before the cutoff)."""
    xs = np.arange(width, dtype=np.float64)[None, :]
    ys = np.arange(height, dtype=np.float64)[:, None]
    out = np.zeros((height, width))
    for x, y, c in frame.keypoints[:, joint_index]:
        if c > cfg.score_epsilon:
            d2 = (xs - x) ** 2 + (ys - y) ** 2
            v = np.where(d2 <= cfg.radius ** 2, np.exp(-d2 / (2 * cfg.sigma ** 2)) * c, 0.0)
            out = np.maximum(out, v)
    return out


def naive_limb_map(frame, limb, height, width, cfg=GaussianConfig()):
    xs = np.arange(width, dtype=np.float64)[None, :]
    ys = np.arange(height, dtype=np.float64)[:, None]
    out = np.zeros((height, width))
    a, b = limb
    for person in frame.keypoints:
        c = min(person[a, 2], person[b, 2])
        if c > cfg.score_epsilon:
            d2 = _segment_dist2(xs, ys, *person[a, :2], *person[b, :2])
            v = np.where(d2 <= cfg.radius ** 2, np.exp(-d2 / (2 * cfg.sigma ** 2)) * c, 0.0)
            out = np.maximum(out, v)
    return out


@dataclass(frozen=True, eq=False)
class HeatmapVolume:
    """``(K, T, H, W)`` float32 stack of joint or limb maps."""

    values: np.ndarray
    kind: str = "joint"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 4:
            raise ValueError(f"volume must be 4-D (K, T, H, W), got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> tuple:
        return tuple(self.values.shape)

    def __eq__(self, other):
        if not isinstance(other, HeatmapVolume):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.values, other.values)

    __hash__ = None


def build_volume(seq: SkeletonSequence, kind: str, out_hw,
                 cfg: GaussianConfig = GaussianConfig()) -> HeatmapVolume:
    """Rasterize every frame of ``seq`` (already in ``out_hw`` coordinates)."""
    h, w = (int(v) for v in out_hw)
    _check_size(h, w)
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    layout = seq.layout
    n_ch = layout.num_joints if kind == "joint" else layout.num_limbs
    vol = np.zeros((n_ch, seq.num_frames, h, w), dtype=np.float64)
    for t, frame in enumerate(seq.frames):
        for person in frame.keypoints:
            if kind == "joint":
                for k, (x, y, c) in enumerate(person):
                    if c > cfg.score_epsilon:
                        _splat_joint(vol[k, t], x, y, c, cfg)
            else:
                for l, (a, b) in enumerate(layout.limbs):
                    c = min(person[a, 2], person[b, 2])
                    if c > cfg.score_epsilon:
                        _splat_limb(vol[l, t], person[a, 0], person[a, 1],
                                    person[b, 0], person[b, 1], c, cfg)
    return HeatmapVolume(vol.astype(np.float32), kind)


# --- file formats ---------------------------------------------------------------

HVL_MAGIC = b"HVL1"


def save_volume(vol: HeatmapVolume, path) -> None:
    """Write the ``HVL1`` format: magic, five little-endian u32 (kind, K, T, H, W),
    then float32 little-endian values in ``[k][t][h][w]`` order."""
    header = HVL_MAGIC + struct.pack("<5I", KINDS.index(vol.kind), *vol.dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(vol.values, dtype="<f4").tobytes())


def load_volume(path) -> HeatmapVolume:
    data = Path(path).read_bytes()
    if data[:4] != HVL_MAGIC:
        raise ValueError(f"{path}: not an HVL1 file")
    kind, *dims = struct.unpack_from("<5I", data, 4)
    if kind >= len(KINDS):
        raise ValueError(f"{path}: unknown volume kind {kind}")
    n = int(np.prod(dims))
    if len(data) != 24 + 4 * n:
        raise ValueError(f"{path}: expected {n} values, file size is {len(data)} bytes")
    values = np.frombuffer(data, dtype="<f4", count=n, offset=24).reshape(dims)
    return HeatmapVolume(values.astype(np.float32), KINDS[kind])


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Linear map 1.0 -> 255, rounding half up, clipped to [0, 255]."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(
        np.uint8)


def render_slice(vol: HeatmapVolume, channel: int, frame: int, path) -> None:
    """Write channel ``channel`` of frame ``frame`` as a binary (P5) PGM."""
    k, t, h, w = vol.dims
    if not (0 <= channel < k and 0 <= frame < t):
        raise IndexError(f"slice ({channel}, {frame}) out of range for volume {vol.dims}")
    pixels = quantize_u8(vol.values[channel, frame])
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
