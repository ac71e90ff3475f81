"""Synthetic COCO-17 action clips and the robustness / sampling harnesses.

Three classes are animated kinematically from joint angles: raising the
left arm, raising the right arm, and squatting. Each clip idles, moves
through a smooth monotone phase starting at a random onset, then holds the
end pose. Subjects face the camera, so a person's left side lies at larger
image x. Coordinates are image pixels with y pointing down.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .net3d.losses import argmax
from .net3d.train import train
from .pipeline import PipelineConfig, make_volume
from .preprocess import drop_limb_keypoints, fraction_spanned, sample_indices
from .rng import derive_seed, make_rng
from .skeleton import PoseFrame, SkeletonSequence, coco17_layout

CLASSES = ("raise-left-arm", "raise-right-arm", "squat")
FRAME_HW = (240, 320)

# Body proportions in torso lengths.
_SHOULDER_HALF, _HIP_HALF = 0.35, 0.20
_UPPER_ARM, _FOREARM, _THIGH = 0.55, 0.50, 0.80
_HEAD = {0: (0.0, -1.35), 1: (0.07, -1.42), 2: (-0.07, -1.42), 3: (0.14, -1.38),
         4: (-0.14, -1.38)}


@dataclass(frozen=True)
class SynthActionSpec:
    """``n_videos`` clips of one class.

    Clip lengths are drawn uniformly from ``[frames_per_video, max_frames]``
    (fixed at ``frames_per_video`` when ``max_frames`` is None).
    """

    class_id: str | int
    n_videos: int = 100
    frames_per_video: int = 32
    noise_sigma: float = 1.0
    seed: int = 0
    max_frames: int | None = 128

    def __post_init__(self):
        if isinstance(self.class_id, int):
            if not 0 <= self.class_id < len(CLASSES):
                raise ValueError(f"class index {self.class_id} out of range")
        elif self.class_id not in CLASSES:
            raise ValueError(f"unknown class {self.class_id!r}; choose from {CLASSES}")
        if self.n_videos < 1:
            raise ValueError("n_videos must be at least 1")
        if self.frames_per_video < 8:
            raise ValueError("frames_per_video must be at least 8")
        if self.max_frames is not None and self.max_frames < self.frames_per_video:
            raise ValueError("max_frames must be >= frames_per_video")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def label(self) -> int:
        return self.class_id if isinstance(self.class_id, int) else CLASSES.index(self.class_id)


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3 - 2 * u)


def motion_phase(n_frames: int, onset: float, duration: float) -> np.ndarray:
    """Nondecreasing phase in [0, 1]: 0 before ``onset``, 1 after ``onset + duration``."""
    t = np.arange(n_frames, dtype=np.float64)
    return smoothstep((t - onset) / duration)


def _arm(shoulder, side, angle, bend):
    """Elbow and wrist for an arm abducted by ``angle`` radians from hanging down."""
    d1 = np.array([side * math.sin(angle), math.cos(angle)])
    elbow = shoulder + _UPPER_ARM * d1
    a2 = angle + bend
    wrist = elbow + _FOREARM * np.array([side * math.sin(a2), math.cos(a2)])
    return elbow, wrist


def _leg(hip, ankle, side):
    """Knee of a leg whose hip-ankle span shortened; the knee bends outward."""
    mid = (hip + ankle) / 2
    half = np.linalg.norm(ankle - hip) / 2
    bulge = math.sqrt(max(_THIGH ** 2 - half ** 2, 0.0))
    return mid + np.array([side * bulge, 0.0])


def pose_at(left_angle, right_angle, squat, bend=0.15) -> np.ndarray:
    """``(17, 2)`` body-frame joint positions (hip centre at the origin before squatting)."""
    drop = 0.7 * squat
    p = np.zeros((17, 2))
    for j, xy in _HEAD.items():
        p[j] = xy
    p[5], p[6] = (_SHOULDER_HALF, -1.0), (-_SHOULDER_HALF, -1.0)
    p[11], p[12] = (_HIP_HALF, 0.0), (-_HIP_HALF, 0.0)
    p[:13, 1] += drop
    p[7], p[9] = _arm(p[5], 1, left_angle, bend)
    p[8], p[10] = _arm(p[6], -1, right_angle, bend)
    p[15], p[16] = (_HIP_HALF, 2 * _THIGH), (-_HIP_HALF, 2 * _THIGH)
    p[13] = _leg(p[11], p[15], 1)
    p[14] = _leg(p[12], p[16], -1)
    return p


def _video(spec: SynthActionSpec, index: int) -> SkeletonSequence:
    rng = make_rng(spec.seed, spec.label, index)
    hi = spec.max_frames or spec.frames_per_video
    n = int(rng.integers(spec.frames_per_video, hi + 1))
    onset = rng.uniform(0.05, 0.35) * (n - 1)
    duration = max(rng.uniform(0.25, 0.45) * (n - 1), 1.0)
    rest_l, rest_r = rng.uniform(math.radians(5), math.radians(15), size=2)
    raised = rng.uniform(math.radians(150), math.radians(170))
    depth = rng.uniform(0.7, 1.0)
    unit = rng.uniform(40, 58)
    h, w = FRAME_HW
    cx = rng.uniform(110, w - 110)
    # a raised wrist reaches 2.05 torso units above the hips, ankles 1.6 below
    cy = rng.uniform(2.1 * unit + 4, h - 4 - 1.65 * unit)
    phase = motion_phase(n, onset, duration)
    noise = rng.normal(0.0, 1.0, size=(n, 17, 2)) * spec.noise_sigma
    scores = rng.uniform(0.7, 1.0, size=(n, 17))
    label = spec.label
    frames = []
    for t in range(n):
        ph = phase[t]
        left = rest_l + ph * (raised - rest_l) if label == 0 else rest_l
        right = rest_r + ph * (raised - rest_r) if label == 1 else rest_r
        squat = ph * depth if label == 2 else 0.0
        xy = pose_at(left, right, squat) * unit + (cx, cy) + noise[t]
        frames.append(PoseFrame(np.concatenate([xy, scores[t][:, None]], axis=1)[None]))
    return SkeletonSequence(f"synth-{CLASSES[label]}-s{spec.seed}-{index:04d}", h, w,
                            tuple(frames), coco17_layout(), label)


def generate_synthetic(spec) -> list[SkeletonSequence]:
    """Clips for one :class:`SynthActionSpec` or, given a list, for each spec in turn.

    Video ``i`` of a class draws from its own stream ``(seed, class, i)``, so
    results do not depend on how many other videos are requested.
    """
    specs = [spec] if isinstance(spec, SynthActionSpec) else list(spec)
    return [_video(s, i) for s in specs for i in range(s.n_videos)]


def synthetic_dataset(n_per_class: int = 100, seed: int = 0, noise_sigma: float = 1.0,
                      frames_per_video: int = 32, max_frames: int | None = 128):
    """Class-balanced clips of all three classes, interleaved by video index."""
    per_class = [generate_synthetic(SynthActionSpec(c, n_per_class, frames_per_video,
                                                    noise_sigma, seed, max_frames))
                 for c in CLASSES]
    return [clips[i] for i in range(n_per_class) for clips in per_class]


def split_dataset(seqs, val_fraction: float = 0.2, seed: int = 0):
    """Deterministic stratified split into (train, held-out)."""
    rng = make_rng(seed, 0x5B17)
    kept, held = [], []
    for lab in sorted({s.label for s in seqs}):
        members = [s for s in seqs if s.label == lab]
        order = rng.permutation(len(members))
        n_val = int(round(val_fraction * len(members)))
        held += [members[i] for i in sorted(order[:n_val])]
        kept += [members[i] for i in sorted(order[n_val:])]
    return kept, held


class SequenceDataset:
    """Skeleton clips rendered to volumes on demand.

    Training batches (``epoch`` given) re-sample frames each epoch with
    ``cfg``'s sampler and optionally apply the limb-keypoint drop with
    probability ``drop_p``. Evaluation inputs (``epoch=None``) use
    ``eval_cfg`` (default: ``cfg`` with the deterministic sampler, or a
    fixed seed for stride sampling) and are cached.
    """

    def __init__(self, seqs, cfg: PipelineConfig, seed: int = 0, drop_p: float = 0.0,
                 eval_cfg: PipelineConfig | None = None):
        self.seqs = list(seqs)
        if not self.seqs:
            raise ValueError("dataset is empty")
        if any(s.label is None for s in self.seqs):
            raise ValueError("every sequence needs a label")
        self.labels = np.array([s.label for s in self.seqs], dtype=np.int64)
        self.cfg = cfg
        if eval_cfg is None:
            eval_cfg = replace(cfg, sampler="det") if cfg.sampler == "uniform" else cfg
        self.eval_cfg = eval_cfg
        self.seed = seed
        self.drop_p = drop_p
        self._eval_cache = {}

    def __len__(self) -> int:
        return len(self.seqs)

    def _train_volume(self, i, epoch):
        seq = self.seqs[i]
        if self.drop_p > 0:
            seq = drop_limb_keypoints(seq, self.drop_p, _mix(self.seed, epoch, i, 1))
        return make_volume(seq, self.cfg, _mix(self.seed, epoch, i, 0)).values

    def _eval_volume(self, i):
        if i not in self._eval_cache:
            self._eval_cache[i] = make_volume(self.seqs[i], self.eval_cfg,
                                              _mix(self.seed, -1, i, 0)).values
        return self._eval_cache[i]

    def volumes(self, indices, epoch=None) -> np.ndarray:
        if epoch is None:
            return np.stack([self._eval_volume(int(i)) for i in indices])
        return np.stack([self._train_volume(int(i), epoch) for i in indices])


def _mix(seed, epoch, index, purpose) -> int:
    return derive_seed(seed, epoch & 0xFFFFFFFF, index, purpose)


# --- robustness ------------------------------------------------------------------


@dataclass
class RobustnessReport:
    drop_probabilities: list
    accuracies: list
    baseline_accuracy: float

    def __post_init__(self):
        if len(self.drop_probabilities) != len(self.accuracies):
            raise ValueError("one accuracy per drop probability is required")

    def rows(self):
        return [{"p": p, "accuracy": a, "delta": a - self.baseline_accuracy}
                for p, a in zip(self.drop_probabilities, self.accuracies)]

    def to_csv(self, path) -> None:
        """Columns: p, accuracy, delta (accuracy minus the unperturbed baseline)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p", "accuracy", "delta"])
            for r in self.rows():
                w.writerow([f"{r['p']:g}", f"{r['accuracy']:.6f}", f"{r['delta']:.6f}"])


def _accuracy(net, seqs, cfg, seed, batch_size=16):
    net.eval()
    correct = 0
    for s in range(0, len(seqs), batch_size):
        chunk = seqs[s:s + batch_size]
        x = np.stack([make_volume(q, cfg, _mix(seed, -1, s + j, 0)).values
                      for j, q in enumerate(chunk)])
        pred = argmax(net.forward(x))
        correct += int(np.sum(pred == np.array([q.label for q in chunk])))
    return correct / len(seqs)


def run_robustness(net, test_set, p_values=(0.0, 0.125, 0.25, 0.5, 1.0), seed: int = 0,
                   cfg: PipelineConfig | None = None) -> RobustnessReport:
    """Accuracy on ``test_set`` after dropping limb keypoints with each probability.

    The same sampler seeds are used for every ``p``, and ``p = 0`` leaves
    clips untouched, so that entry reproduces the baseline exactly.
    """
    if not test_set:
        raise ValueError("test set is empty")
    cfg = cfg or PipelineConfig(sampler="det")
    baseline = _accuracy(net, test_set, cfg, seed)
    accs = []
    for p in p_values:
        perturbed = [drop_limb_keypoints(q, p, _mix(seed, 7, i, 2)) for i, q in enumerate(test_set)]
        accs.append(_accuracy(net, perturbed, cfg, seed))
    return RobustnessReport([float(p) for p in p_values], accs, baseline)


# --- sampling ablation -----------------------------------------------------------


@dataclass
class AblationRow:
    sampler: str
    train_acc: float
    val_acc: float
    mean_span: float


def mean_span(seqs, cfg: PipelineConfig, seed: int = 0) -> float:
    """Average share of each video's frame range covered by one sampled clip."""
    return float(np.mean([
        fraction_spanned(sample_indices(q.num_frames, cfg.sampler_spec(_mix(seed, -1, i, 0))),
                         q.num_frames) for i, q in enumerate(seqs)]))


def run_sampling_ablation(train_set, val_set, net_factory, hyper, cfg: PipelineConfig,
                          seed: int = 0, stride: int = 2, on_epoch=None) -> list[AblationRow]:
    """Train identical networks under uniform and fixed-stride sampling.

    ``net_factory()`` must return a freshly initialized network (same seed
    each call). Each arm is evaluated with its own sampler.
    """
    rows = []
    for sampler in ("uniform", "stride"):
        arm = replace(cfg, sampler=sampler, stride=stride)
        net = net_factory()
        hist = train(net, SequenceDataset(train_set, arm, seed), hyper, seed,
                     SequenceDataset(val_set, arm, seed), on_epoch)
        rows.append(AblationRow(sampler, hist.final.train_acc, hist.final.val_acc,
                                mean_span(val_set, replace(arm, sampler=(
                                    "det" if sampler == "uniform" else "stride")), seed)))
    return rows


def ablation_to_csv(rows, path) -> None:
    """Columns: sampler, train_acc, val_acc, mean_span."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sampler", "train_acc", "val_acc", "mean_span"])
        for r in rows:
            w.writerow([r.sampler, f"{r.train_acc:.6f}", f"{r.val_acc:.6f}", f"{r.mean_span:.6f}"])
