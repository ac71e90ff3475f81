"""Stage-by-stage output shapes and compute budgets of the two backbones.

Run: python3 demos/shape_tour.py
"""

from __future__ import annotations

from heatvol.net3d import (
    build_pose_slowonly,
    build_rgbpose_slowfast,
    count_params_flops,
    pose_slowonly_spec,
    rgb_slow_spec,
)


def main() -> None:
    pose = pose_slowonly_spec(frames=32)
    net = build_rgbpose_slowfast(pose, rgb_slow_spec())
    for pathway, shapes in net.stage_shapes().items():
        print(f"{pathway} pathway")
        for name, shape in shapes.items():
            print(f"  {name:5s} -> {'x'.join(map(str, shape))}")

    print("pose backbone budget by width (input 17x48x56x56):")
    for width in (16, 32, 64):
        net = build_pose_slowonly(frames=48, base_channels=width)
        params, flops = count_params_flops(net, (17, 48, 56, 56))
        print(f"  width {width:2d}: {params / 1e6:5.2f}M params, {flops / 1e9:6.2f}G multiply-adds")


if __name__ == "__main__":
    main()
