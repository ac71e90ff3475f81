"""Parameter and multiply-add accounting (classifier excluded)."""

from __future__ import annotations

from .layers import Conv3d, Module
from .resnet import PoseSlowOnly, RGBPoseSlowFast


def _classifier_ids(net: Module) -> set:
    heads = []
    if isinstance(net, PoseSlowOnly):
        heads = [net.classifier]
    elif isinstance(net, RGBPoseSlowFast):
        heads = net.classifiers
    return {id(t) for h in heads for t in h.parameters()}


def count_params(net: Module) -> int:
    skip = _classifier_ids(net)
    return sum(t.size for t in net.parameters() if id(t) not in skip)


def count_flops(net: Module, input_shape) -> int:
    """Convolution multiply-adds for one sample (1 multiply-add = 1 FLOP).

    ``input_shape`` is ``(C, T, H, W)``; for the two-pathway network pass
    ``(pose_shape, rgb_shape)``. Norms, activations, pooling and the
    classifier are not counted.
    """
    total = [0]

    def visit(conv, in_shape):
        total[0] += conv.macs(in_shape)

    if isinstance(net, RGBPoseSlowFast):
        pose_shape, rgb_shape = input_shape
        net.walk((1,) + tuple(rgb_shape), (1,) + tuple(pose_shape), visit)
    elif isinstance(net, PoseSlowOnly):
        net.backbone.walk((1,) + tuple(input_shape), visit)
    elif isinstance(net, Conv3d):
        visit(net, (1,) + tuple(input_shape))
    elif hasattr(net, "walk"):
        net.walk((1,) + tuple(input_shape), visit)
    else:
        raise TypeError(f"cannot count FLOPs of {type(net).__name__}")
    return total[0]


def count_params_flops(net: Module, input_shape) -> tuple[int, int]:
    return count_params(net), count_flops(net, input_shape)
