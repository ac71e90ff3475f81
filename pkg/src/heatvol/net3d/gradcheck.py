"""Central finite-difference checks of analytic gradients.

The checked scalar is ``L = sum(r * f(x))`` for a fixed random projection
``r``, so every output element contributes. Entries whose perturbation flips
a ReLU mask or a max-pool winner sit on a kink and are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import make_rng
from .layers import MaxPool3d, Module, ReLU, retain_activations

DEFAULT_EPSILON = 1e-4
DEFAULT_SAMPLES = 200
REL_FLOOR = 1e-7


def relative_error(analytic: float, numeric: float, floor: float = REL_FLOOR) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; a sign flip scores 2."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped: int
    worst: str

    def passed(self, tol: float = 1e-5) -> bool:
        return self.checked > 0 and self.max_rel_error < tol


class FunctionOp(Module):
    """Adapter turning ``forward(x) -> y`` and ``backward(x, g) -> gx`` into a module."""

    def __init__(self, forward, backward):
        self._f, self._b = forward, backward
        self._x = None

    def forward(self, x):
        self._x = x
        return np.asarray(self._f(x))

    def backward(self, grad):
        return self._b(self._x, grad)


def _kinks(net: Module):
    out = []
    for m in net.modules():
        if isinstance(m, ReLU) and m.last_mask is not None:
            out.append(m.last_mask.copy())
        elif isinstance(m, MaxPool3d) and m._cache is not None:
            out.append(m._cache.argmax.copy())
    return out


def _same(a, b):
    return len(a) == len(b) and all(np.array_equal(u, v) for u, v in zip(a, b))


def grad_check_report(net: Module, x, epsilon: float = DEFAULT_EPSILON,
                      n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                      check_input: bool = True, check_params: bool = True) -> GradCheckReport:
    """Compare ``net``'s backward pass with central differences.

    ``x`` is an array or a tuple of arrays (multi-input networks). Entries are
    drawn uniformly from the input(s) and all parameters, ``n_samples`` in
    total (every entry when there are fewer).
    """
    rng = make_rng(seed, 0x6EC4)
    multi = isinstance(x, tuple)
    xs = tuple(np.array(v, dtype=np.float64) for v in (x if multi else (x,)))
    net.train()

    def run():
        with retain_activations():
            out = net.forward(xs if multi else xs[0])
        return out

    out = run()
    outs = out if isinstance(out, tuple) else (out,)
    proj = [rng.standard_normal(np.shape(o)) for o in outs]

    def loss(o):
        os = o if isinstance(o, tuple) else (o,)
        return float(sum(np.sum(r * np.asarray(v)) for r, v in zip(proj, os)))

    base_kinks = _kinks(net)
    net.zero_grad()
    g = net.backward(tuple(proj) if isinstance(out, tuple) else proj[0])
    gxs = g if isinstance(g, tuple) else (g,)

    targets = []  # (label, array, analytic gradient)
    if check_input:
        for i, (xi, gi) in enumerate(zip(xs, gxs)):
            if gi is not None:
                targets.append((f"input{i}", xi, np.asarray(gi)))
    if check_params:
        for name, t in net.named_parameters():
            targets.append((name, t.values, t.grad))
    sizes = np.array([a.size for _, a, _ in targets])
    total = int(sizes.sum())
    if total == 0:
        return GradCheckReport(0.0, 0, 0, "")
    picks = np.arange(total) if total <= n_samples else np.sort(
        rng.choice(total, n_samples, replace=False))
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst, worst_at, checked, skipped = 0.0, "", 0, 0
    for flat in picks:
        ti = int(np.searchsorted(offsets, flat, side="right") - 1)
        label, arr, grad = targets[ti]
        idx = np.unravel_index(int(flat - offsets[ti]), arr.shape)
        orig = arr[idx]
        arr[idx] = orig + epsilon
        lp = loss(run())
        kp = _kinks(net)
        arr[idx] = orig - epsilon
        lm = loss(run())
        km = _kinks(net)
        arr[idx] = orig
        if not (_same(kp, base_kinks) and _same(km, base_kinks)):
            skipped += 1
            continue
        numeric = (lp - lm) / (2 * epsilon)
        err = relative_error(float(grad[idx]), numeric)
        checked += 1
        if err > worst:
            worst, worst_at = err, f"{label}{list(map(int, idx))}"
    run()
    net.zero_grad()
    return GradCheckReport(worst, checked, skipped, worst_at)


def grad_check(net: Module, x, epsilon: float = DEFAULT_EPSILON,
               n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Maximum relative error between analytic and central-difference gradients."""
    return grad_check_report(net, x, epsilon, n_samples, seed).max_rel_error


def loss_grad_check(loss_and_grad, x, epsilon: float = DEFAULT_EPSILON,
                    n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Check a scalar function ``loss_and_grad(x) -> (loss, grad)`` directly."""
    x = np.array(x, dtype=np.float64)
    _, g = loss_and_grad(x)
    rng = make_rng(seed, 0x1055)
    picks = np.arange(x.size) if x.size <= n_samples else rng.choice(x.size, n_samples, False)
    worst = 0.0
    for flat in picks:
        idx = np.unravel_index(int(flat), x.shape)
        orig = x[idx]
        x[idx] = orig + epsilon
        lp = loss_and_grad(x)[0]
        x[idx] = orig - epsilon
        lm = loss_and_grad(x)[0]
        x[idx] = orig
        worst = max(worst, relative_error(float(np.asarray(g)[idx]), (lp - lm) / (2 * epsilon)))
    return worst


__all__ = ["grad_check", "grad_check_report", "loss_grad_check", "relative_error",
           "FunctionOp", "GradCheckReport"]
