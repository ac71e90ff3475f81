"""Pose-SlowOnly and RGBPose-SlowFast built from bottleneck ResNet3d stages."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import SpecError
from ..rng import make_rng
from .layers import (
    BatchNorm3d,
    Conv3d,
    GlobalAvgPool,
    Identity,
    Linear,
    MaxPool3d,
    Module,
    ReLU,
)

STAGE_NAMES = ("stem", "res2", "res3", "res4", "res5")
EXPANSION = 4


@dataclass(frozen=True)
class StageSpec:
    name: str
    block_count: int
    out_channels: int
    temporal_kernel: int = 1
    spatial_stride: int = 1
    temporal_stride: int = 1

    def validate(self) -> None:
        if self.name not in STAGE_NAMES:
            raise SpecError(f"unknown stage name {self.name!r}")
        if min(self.block_count, self.out_channels, self.spatial_stride) < 1:
            raise SpecError(f"stage {self.name}: counts and strides must be positive")
        if self.temporal_kernel not in (1, 3):
            raise SpecError(f"stage {self.name}: temporal kernel must be 1 or 3")
        if self.temporal_stride != 1:
            raise SpecError(f"stage {self.name}: temporal stride must be 1")


@dataclass(frozen=True)
class NetSpec:
    pathway: str
    input_shape: tuple
    base_channels: int
    stages: tuple
    num_classes: int
    norm: bool = True

    def validate(self) -> None:
        if self.pathway not in ("pose", "rgb"):
            raise SpecError(f"pathway must be 'pose' or 'rgb', got {self.pathway!r}")
        if len(self.input_shape) != 4 or min(self.input_shape) < 1:
            raise SpecError(f"input_shape must be positive (C, T, H, W), got {self.input_shape}")
        if self.num_classes < 1 or self.base_channels < 1:
            raise SpecError("num_classes and base_channels must be positive")
        names = [s.name for s in self.stages]
        if not names or names[0] != "stem":
            raise SpecError("first stage must be the stem")
        for s in self.stages:
            s.validate()
        stem = self.stages[0]
        if self.pathway == "pose":
            if "res2" in names:
                raise SpecError("pose pathway has no res2 stage")
            if stem.spatial_stride != 1:
                raise SpecError("pose pathway stem must not downsample")
        else:
            if "res2" not in names:
                raise SpecError("rgb pathway requires a res2 stage")
            if stem.spatial_stride != 2:
                raise SpecError("rgb pathway stem must use spatial stride 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["stages"] = list(d["stages"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        stages = tuple(StageSpec(**s) for s in d["stages"])
        return cls(d["pathway"], tuple(d["input_shape"]), d["base_channels"], stages,
                   d["num_classes"], d.get("norm", True))


def pose_slowonly_spec(in_channels=17, frames=32, size=56, base_channels=32,
                       num_classes=60, norm=True) -> NetSpec:
    """Pose pathway: stem 1x7^2 without downsampling, res3-res5, half-width ResNet50."""
    b = base_channels
    stages = (
        StageSpec("stem", 1, b, 1, 1),
        StageSpec("res3", 4, b * 4, 1, 2),
        StageSpec("res4", 6, b * 8, 3, 2),
        StageSpec("res5", 3, b * 16, 3, 2),
    )
    return NetSpec("pose", (in_channels, frames, size, size), b, stages, num_classes, norm)


def rgb_slow_spec(in_channels=3, frames=8, size=224, base_channels=64,
                  num_classes=60, norm=True) -> NetSpec:
    """RGB pathway: SlowOnly ResNet50 with a downsampling stem and max-pool."""
    b = base_channels
    stages = (
        StageSpec("stem", 1, b, 1, 2),
        StageSpec("res2", 3, b * 4, 1, 1),
        StageSpec("res3", 4, b * 8, 1, 2),
        StageSpec("res4", 6, b * 16, 3, 2),
        StageSpec("res5", 3, b * 32, 3, 2),
    )
    return NetSpec("rgb", (in_channels, frames, size, size), b, stages, num_classes, norm)


def _norm(channels, norm, dtype):
    return BatchNorm3d(channels, dtype=dtype) if norm else Identity()


class ConvNorm(Module):
    """Conv3d followed by batch norm (or a biased conv when norm is off)."""

    def __init__(self, cin, cout, kernel, stride=1, padding=0, norm=True, rng=None,
                 dtype=np.float32):
        self.conv = Conv3d(cin, cout, kernel, stride, padding, bias=not norm, rng=rng, dtype=dtype)
        self.bn = _norm(cout, norm, dtype)

    def output_shape(self, in_shape):
        return self.conv.output_shape(in_shape)

    def walk(self, in_shape, fn):
        fn(self.conv, in_shape)
        return self.conv.output_shape(in_shape)

    def forward(self, x):
        return self.bn.forward(self.conv.forward(x))

    def backward(self, grad):
        return self.conv.backward(self.bn.backward(grad))


class Bottleneck(Module):
    """1x1 reduce (temporal kernel kt), 1x3^2 spatial, 1x1 expand, plus shortcut."""

    def __init__(self, cin, inner, cout, temporal_kernel=1, spatial_stride=1, norm=True,
                 rng=None, dtype=np.float32):
        kt = temporal_kernel
        s = spatial_stride
        self.conv1 = ConvNorm(cin, inner, (kt, 1, 1), 1, (kt // 2, 0, 0), norm, rng, dtype)
        self.relu1 = ReLU()
        self.conv2 = ConvNorm(inner, inner, (1, 3, 3), (1, s, s), (0, 1, 1), norm, rng, dtype)
        self.relu2 = ReLU()
        self.conv3 = ConvNorm(inner, cout, 1, 1, 0, norm, rng, dtype)
        if cin != cout or s != 1:
            self.shortcut = ConvNorm(cin, cout, 1, (1, s, s), 0, norm, rng, dtype)
        else:
            self.shortcut = Identity()
        self.relu_out = ReLU()

    def output_shape(self, in_shape):
        return self.conv3.output_shape(self.conv2.output_shape(self.conv1.output_shape(in_shape)))

    def walk(self, in_shape, fn):
        s = self.conv1.walk(in_shape, fn)
        s = self.conv2.walk(s, fn)
        s = self.conv3.walk(s, fn)
        if isinstance(self.shortcut, ConvNorm):
            self.shortcut.walk(in_shape, fn)
        return s

    def forward(self, x):
        y = self.relu1.forward(self.conv1.forward(x))
        y = self.relu2.forward(self.conv2.forward(y))
        y = self.conv3.forward(y)
        return self.relu_out.forward(y + self.shortcut.forward(x))

    def backward(self, grad):
        g = self.relu_out.backward(grad)
        gx = self.shortcut.backward(g)
        gy = self.conv3.backward(g)
        gy = self.conv2.backward(self.relu2.backward(gy))
        gy = self.conv1.backward(self.relu1.backward(gy))
        return gx + gy


class ResStage(Module):
    def __init__(self, spec: StageSpec, cin, norm=True, rng=None, dtype=np.float32):
        self.name = spec.name
        inner = spec.out_channels // EXPANSION
        self.blocks = []
        for i in range(spec.block_count):
            stride = spec.spatial_stride if i == 0 else 1
            self.blocks.append(Bottleneck(cin if i == 0 else spec.out_channels, inner,
                                          spec.out_channels, spec.temporal_kernel, stride,
                                          norm, rng, dtype))

    def output_shape(self, in_shape):
        for b in self.blocks:
            in_shape = b.output_shape(in_shape)
        return in_shape

    def walk(self, in_shape, fn):
        for b in self.blocks:
            in_shape = b.walk(in_shape, fn)
        return in_shape

    def forward(self, x):
        for b in self.blocks:
            x = b.forward(x)
        return x

    def backward(self, grad):
        for b in reversed(self.blocks):
            grad = b.backward(grad)
        return grad


class Stem(Module):
    def __init__(self, spec: StageSpec, cin, with_pool, norm=True, rng=None, dtype=np.float32):
        s = spec.spatial_stride
        self.name = "stem"
        self.conv = ConvNorm(cin, spec.out_channels, (1, 7, 7), (1, s, s), (0, 3, 3), norm, rng,
                             dtype)
        self.conv.conv.needs_input_grad = False
        self.conv.conv.sparse_input = True
        self.relu = ReLU()
        self.pool = MaxPool3d((1, 3, 3), (1, 2, 2), (0, 1, 1)) if with_pool else None

    def output_shape(self, in_shape):
        s = self.conv.output_shape(in_shape)
        return self.pool.output_shape(s) if self.pool else s

    def walk(self, in_shape, fn):
        s = self.conv.walk(in_shape, fn)
        return self.pool.output_shape(s) if self.pool else s

    def forward(self, x):
        x = self.relu.forward(self.conv.forward(x))
        return self.pool.forward(x) if self.pool else x

    def backward(self, grad):
        if self.pool:
            grad = self.pool.backward(grad)
        return self.conv.backward(self.relu.backward(grad))


class Pathway(Module):
    """Stem plus residual stages of one pathway; no classifier."""

    def __init__(self, spec: NetSpec, rng=None, dtype=np.float32):
        spec.validate()
        self.spec = spec
        rng = rng if rng is not None else np.random.default_rng(0)
        stem_spec = spec.stages[0]
        self.stem = Stem(stem_spec, spec.input_shape[0], spec.pathway == "rgb", spec.norm, rng,
                         dtype)
        self.stages = []
        cin = stem_spec.out_channels
        for st in spec.stages[1:]:
            self.stages.append(ResStage(st, cin, spec.norm, rng, dtype))
            cin = st.out_channels
        self.out_channels = cin
        self.stage_outputs = {}

    @property
    def blocks(self):
        return [self.stem] + self.stages

    def stage_shapes(self, in_shape=None):
        """Static (C, T, H, W) output shape of every stage."""
        shape = (1,) + tuple(in_shape or self.spec.input_shape)
        out = {}
        for b in self.blocks:
            shape = b.output_shape(shape)
            out[b.name] = tuple(shape[1:])
        return out

    def walk(self, in_shape, fn):
        for b in self.blocks:
            in_shape = b.walk(in_shape, fn)
        return in_shape

    def forward(self, x):
        self.stage_outputs = {}
        for b in self.blocks:
            x = b.forward(x)
            self.stage_outputs[b.name] = x.shape
        return x

    def backward(self, grad):
        for b in reversed(self.blocks):
            grad = b.backward(grad)
        return grad


class Head(Module):
    def __init__(self, channels, num_classes, rng=None, dtype=np.float32):
        self.pool = GlobalAvgPool()
        self.fc = Linear(channels, num_classes, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.fc.forward(self.pool.forward(x))

    def backward(self, grad):
        return self.pool.backward(self.fc.backward(grad))


class PoseSlowOnly(Module):
    """Single-pathway 3D-CNN over heatmap volumes: backbone, GAP, classifier."""

    def __init__(self, spec: NetSpec, seed: int = 0, dtype=np.float32):
        rng = make_rng(seed)
        self.spec = spec
        self.backbone = Pathway(spec, rng, dtype)
        self.head = Head(self.backbone.out_channels, spec.num_classes, rng, dtype)

    @property
    def classifier(self):
        return self.head.fc

    def stage_shapes(self, in_shape=None):
        return self.backbone.stage_shapes(in_shape)

    def forward(self, x):
        return self.head.forward(self.backbone.forward(x))

    def backward(self, grad):
        return self.backbone.backward(self.head.backward(grad))


def build_pose_slowonly(spec: NetSpec | None = None, seed: int = 0, dtype=np.float32,
                        **spec_kwargs) -> PoseSlowOnly:
    """Build Pose-SlowOnly; ``spec_kwargs`` go to :func:`pose_slowonly_spec`."""
    if spec is None:
        spec = pose_slowonly_spec(**spec_kwargs)
    if spec.pathway != "pose":
        raise SpecError("build_pose_slowonly requires a pose-pathway spec")
    return PoseSlowOnly(spec, seed, dtype)


# --- two-pathway network -----------------------------------------------------


@dataclass(frozen=True)
class LateralSpec:
    direction: str = "bidirectional"
    attach_points: tuple = ("res3", "res4")
    temporal_stride: int = 4
    kernel: int = 5

    def validate(self) -> None:
        if self.direction not in ("rgb_to_pose", "pose_to_rgb", "bidirectional"):
            raise SpecError(f"unknown lateral direction {self.direction!r}")
        if tuple(self.attach_points) != ("res3", "res4"):
            raise SpecError("lateral connections attach before res3 and res4 only")
        if self.temporal_stride < 1:
            raise SpecError("lateral temporal stride must be positive")

    @property
    def pose_to_rgb(self) -> bool:
        return self.direction in ("pose_to_rgb", "bidirectional")

    @property
    def rgb_to_pose(self) -> bool:
        return self.direction in ("rgb_to_pose", "bidirectional")


class TemporalRepeat(Module):
    """Nearest-neighbour upsampling along time by an integer factor."""

    def __init__(self, factor):
        self.factor = factor

    def output_shape(self, in_shape):
        return tuple(in_shape[:2]) + (in_shape[2] * self.factor,) + tuple(in_shape[3:])

    def forward(self, x):
        return np.repeat(x, self.factor, axis=2)

    def backward(self, grad):
        n, c, t, h, w = grad.shape
        return grad.reshape(n, c, t // self.factor, self.factor, h, w).sum(axis=3)


class Lateral(Module):
    """Bidirectional (or one-way) fusion at one attach point.

    pose->rgb: time-strided conv (kernel k x 1^2, stride r) to 2x pose width.
    rgb->pose: 1x1^2 conv to pose width, then repeat each step r times.
    Each receiving pathway concatenates and projects back with a 1x1^2 conv.
    """

    def __init__(self, spec: LateralSpec, rgb_c, pose_c, norm=True, rng=None, dtype=np.float32):
        r = spec.temporal_stride
        self.p2r = self.r2p = None
        if spec.pose_to_rgb:
            self.p2r = ConvNorm(pose_c, 2 * pose_c, (spec.kernel, 1, 1), (r, 1, 1),
                                (spec.kernel // 2, 0, 0), norm, rng, dtype)
            self.p2r_relu = ReLU()
            self.rgb_fuse = ConvNorm(rgb_c + 2 * pose_c, rgb_c, 1, 1, 0, norm, rng, dtype)
            self.rgb_split = rgb_c
        if spec.rgb_to_pose:
            self.r2p = ConvNorm(rgb_c, pose_c, 1, 1, 0, norm, rng, dtype)
            self.r2p_relu = ReLU()
            self.r2p_up = TemporalRepeat(r)
            self.pose_fuse = ConvNorm(2 * pose_c, pose_c, 1, 1, 0, norm, rng, dtype)
            self.pose_split = pose_c

    def walk(self, rgb_shape, pose_shape, fn):
        if self.p2r:
            s = self.p2r.walk(pose_shape, fn)
            cat = (rgb_shape[0], rgb_shape[1] + s[1]) + tuple(rgb_shape[2:])
            self.rgb_fuse.walk(cat, fn)
        if self.r2p:
            s = self.r2p.walk(rgb_shape, fn)
            cat = (pose_shape[0], pose_shape[1] + s[1]) + tuple(pose_shape[2:])
            self.pose_fuse.walk(cat, fn)

    def forward(self, r, p):
        r_out, p_out = r, p
        if self.p2r:
            lat = self.p2r_relu.forward(self.p2r.forward(p))
            if lat.shape[2:] != r.shape[2:]:
                raise SpecError(f"pose->rgb lateral shape {lat.shape} does not align with {r.shape}")
            r_out = self.rgb_fuse.forward(np.concatenate([r, lat], axis=1))
        if self.r2p:
            lat = self.r2p_up.forward(self.r2p_relu.forward(self.r2p.forward(r)))
            if lat.shape[2:] != p.shape[2:]:
                raise SpecError(f"rgb->pose lateral shape {lat.shape} does not align with {p.shape}")
            p_out = self.pose_fuse.forward(np.concatenate([p, lat], axis=1))
        return r_out, p_out

    def backward(self, gr_out, gp_out):
        gr, gp = gr_out, gp_out
        gr_extra = gp_extra = 0
        if self.p2r:
            g = self.rgb_fuse.backward(gr_out)
            gr = g[:, :self.rgb_split]
            gp_extra = self.p2r.backward(self.p2r_relu.backward(g[:, self.rgb_split:]))
        if self.r2p:
            g = self.pose_fuse.backward(gp_out)
            gp = g[:, :self.pose_split]
            gr_extra = self.r2p.backward(
                self.r2p_relu.backward(self.r2p_up.backward(g[:, self.pose_split:])))
        return gr + gr_extra, gp + gp_extra


class RGBPoseSlowFast(Module):
    """Two pathways with laterals before res3/res4 and one classifier per pathway."""

    def __init__(self, pose_spec: NetSpec, rgb_spec: NetSpec, lateral: LateralSpec,
                 seed: int = 0, dtype=np.float32):
        lateral.validate()
        if pose_spec.pathway != "pose" or rgb_spec.pathway != "rgb":
            raise SpecError("expected one pose-pathway spec and one rgb-pathway spec")
        if pose_spec.num_classes != rgb_spec.num_classes:
            raise SpecError("both pathways must predict the same classes")
        t_pose, t_rgb = pose_spec.input_shape[1], rgb_spec.input_shape[1]
        if t_pose != lateral.temporal_stride * t_rgb:
            raise SpecError(
                f"pose/rgb temporal extents {t_pose}/{t_rgb} are not in ratio "
                f"{lateral.temporal_stride}:1")
        rng = make_rng(seed)
        self.pose_spec, self.rgb_spec, self.lateral_spec = pose_spec, rgb_spec, lateral
        self.rgb = Pathway(rgb_spec, rng, dtype)
        self.pose = Pathway(pose_spec, rng, dtype)
        self.laterals = []
        pose_shapes = self.pose.stage_shapes()
        rgb_shapes = self.rgb.stage_shapes()
        self._attach = {}
        for point in lateral.attach_points:
            before = _previous_stage(point, rgb_spec), _previous_stage(point, pose_spec)
            rc, pc = rgb_shapes[before[0]][0], pose_shapes[before[1]][0]
            self._attach[point] = len(self.laterals)
            self.laterals.append(Lateral(lateral, rc, pc, pose_spec.norm, rng, dtype))
        self.pose_head = Head(self.pose.out_channels, pose_spec.num_classes, rng, dtype)
        self.rgb_head = Head(self.rgb.out_channels, rgb_spec.num_classes, rng, dtype)
        self.stage_outputs = {}

    @property
    def classifiers(self):
        return [self.pose_head.fc, self.rgb_head.fc]

    def stage_shapes(self):
        return {"rgb": self.rgb.stage_shapes(), "pose": self.pose.stage_shapes()}

    def _schedule(self):
        """Yield ('rgb', block) / ('pose', block) / ('lat', lateral) in execution order."""
        rgb_blocks = {b.name: b for b in self.rgb.blocks}
        pose_blocks = {b.name: b for b in self.pose.blocks}
        for name in STAGE_NAMES:
            if name in self._attach:
                yield "lat", name, self.laterals[self._attach[name]]
            if name in rgb_blocks:
                yield "rgb", name, rgb_blocks[name]
            if name in pose_blocks:
                yield "pose", name, pose_blocks[name]

    def walk(self, rgb_shape, pose_shape, fn):
        shapes = {"rgb": rgb_shape, "pose": pose_shape}
        for kind, _, mod in self._schedule():
            if kind == "lat":
                mod.walk(shapes["rgb"], shapes["pose"], fn)
            else:
                shapes[kind] = mod.walk(shapes[kind], fn)
        return shapes

    def forward(self, inputs):
        """``inputs = (pose_volume, rgb_clip)``; returns ``(pose_logits, rgb_logits)``."""
        p, r = inputs
        feats = {"rgb": r, "pose": p}
        self.stage_outputs = {"rgb": {}, "pose": {}}
        for kind, name, mod in self._schedule():
            if kind == "lat":
                feats["rgb"], feats["pose"] = mod.forward(feats["rgb"], feats["pose"])
            else:
                feats[kind] = mod.forward(feats[kind])
                self.stage_outputs[kind][name] = feats[kind].shape
        return self.pose_head.forward(feats["pose"]), self.rgb_head.forward(feats["rgb"])

    def backward(self, grads):
        g_pose, g_rgb = grads
        g = {"pose": self.pose_head.backward(g_pose), "rgb": self.rgb_head.backward(g_rgb)}
        for kind, _, mod in reversed(list(self._schedule())):
            if kind == "lat":
                g["rgb"], g["pose"] = mod.backward(g["rgb"], g["pose"])
            else:
                g[kind] = mod.backward(g[kind])
        return g["pose"], g["rgb"]


def _previous_stage(point, spec: NetSpec) -> str:
    names = [s.name for s in spec.stages]
    if point not in names:
        raise SpecError(f"{spec.pathway} pathway has no stage {point}")
    return names[names.index(point) - 1]


def build_rgbpose_slowfast(pose_spec: NetSpec, rgb_spec: NetSpec,
                           lateral: LateralSpec | None = None, seed: int = 0,
                           dtype=np.float32) -> RGBPoseSlowFast:
    return RGBPoseSlowFast(pose_spec, rgb_spec, lateral or LateralSpec(), seed, dtype)
