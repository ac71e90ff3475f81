"""Standard double-precision gradient-check cases."""

from __future__ import annotations

import numpy as np

from ..rng import make_rng
from .gradcheck import GradCheckReport, grad_check_report, loss_grad_check
from .layers import Conv3d, GlobalAvgPool, Linear, MaxPool3d, ReLU, Sequential
from .losses import dual_loss
from .resnet import (
    Bottleneck,
    LateralSpec,
    NetSpec,
    StageSpec,
    build_pose_slowonly,
    build_rgbpose_slowfast,
)

F64 = np.float64


def micro_pose_spec(norm: bool = True, width: int = 4) -> NetSpec:
    """Stem plus one-block res3/res4/res5 on a 3x4x8x8 input."""
    b = width
    stages = (StageSpec("stem", 1, b, 1, 1), StageSpec("res3", 1, b * 4, 1, 2),
              StageSpec("res4", 1, b * 8, 3, 2), StageSpec("res5", 1, b * 16, 3, 2))
    return NetSpec("pose", (3, 4, 8, 8), b, stages, 3, norm)


def micro_rgb_spec(norm: bool = True) -> NetSpec:
    stages = (StageSpec("stem", 1, 4, 1, 2), StageSpec("res2", 1, 16, 1, 1),
              StageSpec("res3", 1, 32, 1, 2), StageSpec("res4", 1, 64, 3, 2),
              StageSpec("res5", 1, 128, 3, 2))
    return NetSpec("rgb", (3, 1, 32, 32), 4, stages, 3, norm)


def _x(rng, shape):
    return rng.standard_normal(shape)


def check_linear(seed=0, **kw) -> GradCheckReport:
    rng = make_rng(seed, 1)
    return grad_check_report(Linear(12, 5, rng=rng, dtype=F64, init_std=1.0), _x(rng, (4, 12)),
                             seed=seed, **kw)


def check_conv3d(seed=0, **kw) -> GradCheckReport:
    rng = make_rng(seed, 2)
    conv = Conv3d(3, 4, (3, 3, 3), (1, 2, 2), (1, 1, 1), rng=rng, dtype=F64)
    conv.bias.values[:] = rng.standard_normal(4)
    return grad_check_report(conv, _x(rng, (2, 3, 4, 7, 7)), seed=seed, **kw)


def check_bottleneck(seed=0, norm=True, **kw) -> GradCheckReport:
    rng = make_rng(seed, 3)
    block = Bottleneck(6, 3, 12, temporal_kernel=3, spatial_stride=2, norm=norm, rng=rng,
                       dtype=F64)
    return grad_check_report(block, _x(rng, (2, 6, 3, 6, 6)), seed=seed, **kw)


def check_pool_net(seed=0, **kw) -> GradCheckReport:
    """conv + ReLU + max-pool + global pool + classifier."""
    rng = make_rng(seed, 4)
    net = Sequential(Conv3d(2, 4, (1, 3, 3), 1, (0, 1, 1), rng=rng, dtype=F64), ReLU(),
                     MaxPool3d((1, 3, 3), (1, 2, 2), (0, 1, 1)), GlobalAvgPool(),
                     Linear(4, 3, rng=rng, dtype=F64, init_std=1.0))
    return grad_check_report(net, _x(rng, (2, 2, 2, 6, 6)), seed=seed, **kw)


def check_micronet(seed=0, norm=True, **kw) -> GradCheckReport:
    rng = make_rng(seed, 5)
    net = build_pose_slowonly(micro_pose_spec(norm), seed=seed, dtype=F64)
    net.classifier.weight.values[:] = rng.standard_normal(net.classifier.weight.shape)
    return grad_check_report(net, _x(rng, (2, 3, 4, 8, 8)), seed=seed, **kw)


def check_slowfast(seed=0, norm=False, **kw) -> GradCheckReport:
    """Two pathways joined by bidirectional laterals, both heads.

    Normalization is off by default: at micro sizes the deepest RGB stage has
    a 1x1x1 output, and batch statistics over so few values saturate, which
    leaves central differences dominated by curvature rather than the code
    under test. Normalized blocks are covered by the bottleneck and micronet
    cases.
    """
    rng = make_rng(seed, 6)
    net = build_rgbpose_slowfast(micro_pose_spec(norm), micro_rgb_spec(norm),
                                 LateralSpec(temporal_stride=4), seed=seed, dtype=F64)
    for fc in net.classifiers:
        fc.weight.values[:] = rng.standard_normal(fc.weight.shape)
    return grad_check_report(net, (_x(rng, (2, 3, 4, 8, 8)), _x(rng, (2, 3, 1, 32, 32))),
                             seed=seed, **kw)


def check_dual_loss(seed=0, n_samples=200, **kw) -> GradCheckReport:
    rng = make_rng(seed, 7)
    n, c = 4, 10
    labels = rng.integers(c, size=n)
    logits = rng.standard_normal((2, n, c))

    def f(z):
        loss, (gp, gr) = dual_loss(z[0], z[1], labels)
        return loss, np.stack([gp, gr])

    err = loss_grad_check(f, logits, n_samples=n_samples, seed=seed, **kw)
    return GradCheckReport(err, min(logits.size, n_samples), 0, "")


TARGETS = {
    "linear": check_linear,
    "conv3d": check_conv3d,
    "bottleneck": check_bottleneck,
    "poolnet": check_pool_net,
    "dual_loss": check_dual_loss,
    "micronet": check_micronet,
    "slowfast": check_slowfast,
}
