"""Skeleton sequences, the COCO-17 layout, and JSON-lines annotation I/O.

Keypoints of one frame are stored as a ``(persons, K, 3)`` float array with
columns ``(x, y, score)``. A score of 0 marks a missing or dropped keypoint:
its coordinates are kept but heatmap generation ignores it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import AnnotationParseError, SchemaError

COORD_DECIMALS = 2
SCORE_DECIMALS = 4


class Keypoint(NamedTuple):
    x: float
    y: float
    score: float


@dataclass(frozen=True)
class SkeletonLayout:
    joint_names: tuple
    limbs: tuple
    limb_joint_indices: tuple = ()

    def __post_init__(self):
        k = len(self.joint_names)
        for a, b in self.limbs:
            if not (0 <= a < k and 0 <= b < k) or a == b:
                raise SchemaError(f"limb ({a}, {b}) is invalid for a {k}-joint layout")
        for j in self.limb_joint_indices:
            if not 0 <= j < k:
                raise SchemaError(f"limb joint index {j} out of range for {k} joints")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def num_limbs(self) -> int:
        return len(self.limbs)

    def index(self, name: str) -> int:
        return self.joint_names.index(name)


COCO17_JOINTS = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

# Standard COCO skeleton (the 1-based edge list of the keypoint annotations), 0-based.
COCO17_LIMBS = (
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12), (5, 11), (6, 12), (5, 6),
    (5, 7), (6, 8), (7, 9), (8, 10), (1, 2), (0, 1), (0, 2), (1, 3), (2, 4),
    (3, 5), (4, 6),
)


def coco17_layout() -> SkeletonLayout:
    """COCO-17 joints, the COCO skeleton edges, and the 8 limb keypoints
    (left/right elbow, wrist, knee, ankle)."""
    limb_joints = tuple(COCO17_JOINTS.index(f"{side}_{part}")
                        for part in ("elbow", "wrist", "knee", "ankle")
                        for side in ("left", "right"))
    return SkeletonLayout(COCO17_JOINTS, COCO17_LIMBS, limb_joints)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PoseFrame:
    """All persons detected in one frame, as a read-only ``(P, K, 3)`` array."""

    keypoints: np.ndarray

    def __post_init__(self):
        kp = np.array(self.keypoints, dtype=np.float64)
        if kp.size == 0:
            kp = kp.reshape(0, kp.shape[1] if kp.ndim == 3 else 0, 3)
        if kp.ndim != 3 or kp.shape[2] != 3:
            raise SchemaError(f"frame keypoints must have shape (persons, K, 3), got {kp.shape}")
        if not np.all(np.isfinite(kp)):
            raise SchemaError("keypoint values must be finite")
        scores = kp[..., 2]
        if np.any((scores < 0) | (scores > 1)):
            raise SchemaError("keypoint score outside [0, 1]")
        object.__setattr__(self, "keypoints", _freeze(kp))

    @classmethod
    def empty(cls, num_joints: int) -> "PoseFrame":
        return cls(np.zeros((0, num_joints, 3)))

    @property
    def num_persons(self) -> int:
        return self.keypoints.shape[0]

    @property
    def num_joints(self) -> int:
        return self.keypoints.shape[1]

    @property
    def persons(self) -> list[list[Keypoint]]:
        return [[Keypoint(*map(float, kp)) for kp in person] for person in self.keypoints]

    def with_keypoints(self, keypoints) -> "PoseFrame":
        return PoseFrame(keypoints)

    def __eq__(self, other):
        if not isinstance(other, PoseFrame):
            return NotImplemented
        return self.keypoints.shape == other.keypoints.shape and bool(
            np.array_equal(self.keypoints, other.keypoints))

    __hash__ = None


@dataclass(frozen=True)
class SkeletonSequence:
    video_id: str
    frame_height: float
    frame_width: float
    frames: tuple
    layout: SkeletonLayout = field(default_factory=coco17_layout)
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 1:
            raise SchemaError(f"{self.video_id}: a sequence needs at least one frame")
        if self.frame_height < 1 or self.frame_width < 1:
            raise SchemaError(f"{self.video_id}: frame size must be at least 1x1")
        k = self.layout.num_joints
        for t, f in enumerate(self.frames):
            if f.num_persons and f.num_joints != k:
                raise SchemaError(
                    f"{self.video_id}: frame {t} has {f.num_joints} keypoints per person, "
                    f"layout declares {k}")

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def shape_hw(self) -> tuple:
        return (self.frame_height, self.frame_width)

    def replace(self, **changes) -> "SkeletonSequence":
        kw = dict(video_id=self.video_id, frame_height=self.frame_height,
                  frame_width=self.frame_width, frames=self.frames, layout=self.layout,
                  label=self.label)
        kw.update(changes)
        return SkeletonSequence(**kw)

    def map_keypoints(self, fn) -> "SkeletonSequence":
        """New sequence whose frame ``t`` keypoints are ``fn(t, array)``."""
        return self.replace(frames=tuple(
            PoseFrame(fn(t, f.keypoints.copy())) for t, f in enumerate(self.frames)))

    def all_keypoints(self) -> np.ndarray:
        """Every keypoint of every person and frame stacked as ``(M, 3)``."""
        parts = [f.keypoints.reshape(-1, 3) for f in self.frames]
        return np.concatenate(parts, axis=0)


# --- annotation files ---------------------------------------------------------


def _round(v: float, nd: int) -> float:
    r = round(float(v), nd)
    return 0.0 if r == 0 else r


def sequence_to_record(seq: SkeletonSequence) -> dict:
    frames = []
    for f in seq.frames:
        frames.append([[[_round(x, COORD_DECIMALS), _round(y, COORD_DECIMALS),
                         _round(s, SCORE_DECIMALS)] for x, y, s in person]
                       for person in f.keypoints])
    h, w = seq.frame_height, seq.frame_width
    return {
        "video_id": seq.video_id,
        "img_shape": [int(h) if float(h).is_integer() else h,
                      int(w) if float(w).is_integer() else w],
        "total_frames": seq.num_frames,
        "label": seq.label,
        "frames": frames,
    }


def record_to_sequence(rec: dict, layout: SkeletonLayout | None = None) -> SkeletonSequence:
    layout = layout or coco17_layout()
    try:
        vid = str(rec["video_id"])
        h, w = rec["img_shape"]
        frames_raw = rec["frames"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"record is missing required fields: {exc}") from None
    k = layout.num_joints
    total = rec.get("total_frames", len(frames_raw))
    if total != len(frames_raw):
        raise SchemaError(f"{vid}: total_frames={total} but {len(frames_raw)} frames given")
    label = rec.get("label")
    if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
        raise SchemaError(f"{vid}: label must be an integer or null")
    frames = []
    for t, persons in enumerate(frames_raw):
        if not isinstance(persons, list):
            raise SchemaError(f"{vid}: frame {t} is not a list of persons")
        for p, person in enumerate(persons):
            if not isinstance(person, list) or len(person) != k:
                n = len(person) if isinstance(person, list) else "?"
                raise SchemaError(
                    f"{vid}: frame {t} person {p} has {n} keypoints, layout declares {k}")
            for kp in person:
                if not isinstance(kp, list) or len(kp) != 3:
                    raise SchemaError(f"{vid}: frame {t} person {p}: keypoints are [x, y, score]")
        try:
            arr = np.array(persons, dtype=np.float64).reshape(len(persons), k, 3)
        except (TypeError, ValueError):
            raise SchemaError(f"{vid}: frame {t} contains non-numeric values") from None
        try:
            frames.append(PoseFrame(arr))
        except SchemaError as exc:
            raise SchemaError(f"{vid}: frame {t}: {exc}") from None
    return SkeletonSequence(vid, h, w, tuple(frames), layout, label)


def load_annotations(path, layout: SkeletonLayout | None = None) -> list[SkeletonSequence]:
    """Read a JSON-lines annotation file, one video per line.

    Blank lines are skipped. Raises :class:`AnnotationParseError` naming the
    line number for malformed JSON and :class:`SchemaError` for content that
    does not match the layout.
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationParseError(lineno, exc.msg) from None
            if not isinstance(rec, dict):
                raise AnnotationParseError(lineno, "expected a JSON object")
            try:
                out.append(record_to_sequence(rec, layout))
            except SchemaError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
    return out


def save_annotations(sequences: Iterable[SkeletonSequence], path) -> None:
    """Write sequences as JSON lines; coordinates keep 2 decimals, scores 4."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(json.dumps(sequence_to_record(seq), separators=(",", ":")))
            fh.write("\n")


def quantize(seq: SkeletonSequence) -> SkeletonSequence:
    """Round a sequence to the serialized precision (what a save/load returns)."""
    return record_to_sequence(sequence_to_record(seq), seq.layout)
