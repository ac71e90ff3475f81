from __future__ import annotations

import numpy as np
import pytest

from heatvol.errors import SpecError
from heatvol.net3d import budget
from heatvol.net3d.checks import micro_pose_spec, micro_rgb_spec
from heatvol.net3d.resnet import (
    LateralSpec,
    NetSpec,
    StageSpec,
    TemporalRepeat,
    build_pose_slowonly,
    build_rgbpose_slowfast,
    pose_slowonly_spec,
    rgb_slow_spec,
)

POSE_SHAPES = {"stem": (32, 32, 56, 56), "res3": (128, 32, 28, 28),
               "res4": (256, 32, 14, 14), "res5": (512, 32, 7, 7)}
RGB_SHAPES = {"stem": (64, 8, 56, 56), "res2": (256, 8, 56, 56), "res3": (512, 8, 28, 28),
              "res4": (1024, 8, 14, 14), "res5": (2048, 8, 7, 7)}


def test_pose_stage_shapes_static():
    net = build_pose_slowonly(frames=32, num_classes=60)
    assert net.stage_shapes() == POSE_SHAPES


def test_slowfast_stage_shapes_static():
    net = build_rgbpose_slowfast(pose_slowonly_spec(), rgb_slow_spec())
    shapes = net.stage_shapes()
    assert shapes["pose"] == POSE_SHAPES and shapes["rgb"] == RGB_SHAPES


def test_pose_forward_matches_static(rng):
    net = build_pose_slowonly(base_channels=4, frames=4, size=16, num_classes=5)
    out = net.forward(rng.random((2, 17, 4, 16, 16)).astype(np.float32))
    assert out.shape == (2, 5) and out.dtype == np.float32
    static = net.stage_shapes()
    assert {k: v[1:] for k, v in net.backbone.stage_outputs.items()} == static


def test_slowfast_forward_shapes(rng):
    net = build_rgbpose_slowfast(micro_pose_spec(), micro_rgb_spec(), LateralSpec(temporal_stride=4),
                                 dtype=np.float64)
    p, r = net.forward((rng.random((2, 3, 4, 8, 8)), rng.random((2, 3, 1, 32, 32))))
    assert p.shape == r.shape == (2, 3)
    static = net.stage_shapes()
    for kind in ("pose", "rgb"):
        assert {k: v[1:] for k, v in net.stage_outputs[kind].items()} == static[kind]


def test_budget_width32():
    net = build_pose_slowonly(frames=48, num_classes=60)
    params, macs = budget.count_params_flops(net, (17, 48, 56, 56))
    assert abs(params / 2.0e6 - 1) <= 0.15
    assert abs(macs / 15.9e9 - 1) <= 0.15


def test_params_exclude_classifier():
    a = budget.count_params(build_pose_slowonly(base_channels=4, num_classes=3))
    b = budget.count_params(build_pose_slowonly(base_channels=4, num_classes=400))
    assert a == b


def test_flops_scale_with_frames():
    net = build_pose_slowonly(base_channels=4, frames=8, size=16)
    f8 = budget.count_flops(net, (17, 8, 16, 16))
    f16 = budget.count_flops(net, (17, 16, 16, 16))
    assert f16 == 2 * f8


def test_single_conv_macs():
    from heatvol.net3d.layers import Conv3d
    conv = Conv3d(3, 4, (1, 3, 3), 1, (0, 1, 1))
    assert budget.count_flops(conv, (3, 2, 5, 5)) == 2 * 25 * 4 * 3 * 9


@pytest.mark.parametrize("bad", [
    dict(pathway="pose", extra=StageSpec("res2", 1, 8)),
    dict(pathway="rgb", extra=None),
])
def test_spec_validation(bad):
    base = pose_slowonly_spec(base_channels=4) if bad["pathway"] == "pose" else None
    if bad["pathway"] == "pose":
        stages = (base.stages[0], bad["extra"]) + base.stages[1:]
        spec = NetSpec("pose", base.input_shape, 4, stages, 3)
    else:
        s = rgb_slow_spec(base_channels=4)
        spec = NetSpec("rgb", s.input_shape, 4, (s.stages[0],) + s.stages[2:], 3)
    with pytest.raises(SpecError):
        spec.validate()


def test_pose_stem_must_not_downsample():
    s = pose_slowonly_spec(base_channels=4)
    spec = NetSpec("pose", s.input_shape, 4, (StageSpec("stem", 1, 4, 1, 2),) + s.stages[1:], 3)
    with pytest.raises(SpecError):
        build_pose_slowonly(spec)


def test_stage_validation():
    for st in (StageSpec("res9", 1, 4), StageSpec("res3", 0, 4), StageSpec("res3", 1, 4, 2),
               StageSpec("res3", 1, 4, 1, 1, 2)):
        with pytest.raises(SpecError):
            st.validate()


def test_spec_round_trip():
    spec = pose_slowonly_spec(base_channels=8, frames=12)
    assert NetSpec.from_dict(spec.to_dict()) == spec


def test_lateral_validation():
    for bad in (LateralSpec(direction="up"), LateralSpec(attach_points=("res5",)),
                LateralSpec(temporal_stride=0)):
        with pytest.raises(SpecError):
            bad.validate()


def test_slowfast_rejects_bad_temporal_ratio():
    with pytest.raises(SpecError):
        build_rgbpose_slowfast(micro_pose_spec(), micro_rgb_spec(), LateralSpec(temporal_stride=2))


@pytest.mark.parametrize("direction", ["rgb_to_pose", "pose_to_rgb", "bidirectional"])
def test_lateral_directions_build_and_run(direction, rng):
    net = build_rgbpose_slowfast(micro_pose_spec(), micro_rgb_spec(),
                                 LateralSpec(direction=direction, temporal_stride=4))
    for lat in net.laterals:
        assert (lat.p2r is not None) == (direction != "rgb_to_pose")
        assert (lat.r2p is not None) == (direction != "pose_to_rgb")
    x = (rng.random((2, 3, 4, 8, 8)).astype(np.float32),
         rng.random((2, 3, 1, 32, 32)).astype(np.float32))
    net.zero_grad()
    p, r = net.forward(x)
    net.backward((rng.standard_normal(p.shape).astype(np.float32),
                  rng.standard_normal(r.shape).astype(np.float32)))
    assert all(np.isfinite(t.grad).all() for t in net.parameters())
    assert np.abs(net.pose.stem.conv.conv.weight.grad).sum() > 0
    assert np.abs(net.rgb.stem.conv.conv.weight.grad).sum() > 0


def test_laterals_couple_pathways(rng):
    """With rgb->pose fusion, changing the RGB input changes the pose logits."""
    net = build_rgbpose_slowfast(micro_pose_spec(), micro_rgb_spec(),
                                 LateralSpec(temporal_stride=4), dtype=np.float64).eval()
    pose = rng.random((1, 3, 4, 8, 8))
    a, _ = net.forward((pose, rng.random((1, 3, 1, 32, 32))))
    b, _ = net.forward((pose, rng.random((1, 3, 1, 32, 32))))
    assert not np.allclose(a, b)


def test_pose_only_lateral_leaves_pose_independent(rng):
    net = build_rgbpose_slowfast(micro_pose_spec(), micro_rgb_spec(),
                                 LateralSpec("pose_to_rgb", temporal_stride=4),
                                 dtype=np.float64).eval()
    pose = rng.random((1, 3, 4, 8, 8))
    a, _ = net.forward((pose, rng.random((1, 3, 1, 32, 32))))
    b, _ = net.forward((pose, rng.random((1, 3, 1, 32, 32))))
    np.testing.assert_array_equal(a, b)


def test_temporal_repeat_backward(rng):
    up = TemporalRepeat(3)
    x = rng.random((1, 2, 2, 3, 3))
    y = up.forward(x)
    assert y.shape == (1, 2, 6, 3, 3)
    np.testing.assert_array_equal(y[:, :, 3], x[:, :, 1])
    np.testing.assert_allclose(up.backward(np.ones_like(y)), 3.0)


def test_same_seed_same_weights():
    a = build_pose_slowonly(base_channels=4, seed=7)
    b = build_pose_slowonly(base_channels=4, seed=7)
    c = build_pose_slowonly(base_channels=4, seed=8)
    for (na, ta), (_, tb), (_, tc) in zip(a.named_parameters(), b.named_parameters(),
                                          c.named_parameters()):
        np.testing.assert_array_equal(ta.values, tb.values)
    assert any(not np.array_equal(ta.values, tc.values)
               for (_, ta), (_, tc) in zip(a.named_parameters(), c.named_parameters()))


def test_norm_initialized_to_unit_scale():
    net = build_pose_slowonly(base_channels=4)
    gammas = [t for n, t in net.named_parameters() if n.endswith("gamma")]
    assert gammas and all((t.values == 1).all() for t in gammas)
