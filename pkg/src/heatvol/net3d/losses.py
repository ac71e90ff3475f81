"""Cross-entropy losses, the two-head loss, and score-level fusion."""

from __future__ import annotations

import numpy as np


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_labels(labels, num_classes):
    labels = np.atleast_1d(np.asarray(labels))
    if labels.dtype.kind not in "iu":
        raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
    bad = (labels < 0) | (labels >= num_classes)
    if np.any(bad):
        raise ValueError(f"label {labels[bad][0]} out of range for {num_classes} classes")
    return labels


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``.

    ``logits`` is ``(N, C)`` or a single ``(C,)`` vector with a scalar label.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    y = _check_labels(labels, z.shape[1])
    if len(y) != len(z):
        raise ValueError(f"{len(y)} labels for a batch of {len(z)}")
    lp = log_softmax(z)
    rows = np.arange(len(z))
    loss = -lp[rows, y].mean()
    grad = np.exp(lp)
    grad[rows, y] -= 1.0
    grad /= len(z)
    return float(loss), (grad[0] if single else grad)


def dual_loss(pose_logits, rgb_logits, labels):
    """Sum of one cross-entropy per pathway.

    Each term only reaches its own head: returns ``(loss, (g_pose, g_rgb))``.
    """
    lp, gp = cross_entropy(pose_logits, labels)
    lr, gr = cross_entropy(rgb_logits, labels)
    return lp + lr, (gp, gr)


def argmax(scores) -> np.ndarray | int:
    """Argmax along the last axis; ties go to the lowest index."""
    out = np.argmax(np.asarray(scores), axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def late_fuse(logit_sets, weights=None) -> np.ndarray:
    """Weighted sum of score vectors from separately trained models."""
    sets = [np.asarray(s, dtype=np.float64) for s in logit_sets]
    if not sets:
        raise ValueError("late_fuse needs at least one score vector")
    weights = [1.0] * len(sets) if weights is None else list(weights)
    if len(weights) != len(sets):
        raise ValueError(f"{len(weights)} weights for {len(sets)} score vectors")
    if any(w < 0 for w in weights):
        raise ValueError("fusion weights must be nonnegative")
    shape = sets[0].shape
    for s in sets[1:]:
        if s.shape != shape:
            raise ValueError(f"score vectors differ in shape: {shape} vs {s.shape}")
    out = np.zeros(shape)
    for w, s in zip(weights, sets):
        out += w * s
    return out
