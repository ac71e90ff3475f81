"""``HNET`` checkpoint files.

Layout (all integers little-endian)::

    b"HNET"  u32 version  u32 n  <n bytes canonical JSON>  u32 blocks
    per block: u32 name_len  <name utf-8>  u32 ndim  ndim x u32 dims  <float32 LE values>

The JSON names the architecture and holds its spec(s); blocks hold every
parameter and normalization buffer under its dotted module path.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import SpecError
from .resnet import (
    LateralSpec,
    NetSpec,
    PoseSlowOnly,
    RGBPoseSlowFast,
    build_pose_slowonly,
    build_rgbpose_slowfast,
)

HNET_MAGIC = b"HNET"
HNET_VERSION = 1


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def describe(net) -> dict:
    if isinstance(net, PoseSlowOnly):
        return {"arch": "pose-slowonly", "spec": net.spec.to_dict()}
    if isinstance(net, RGBPoseSlowFast):
        lat = net.lateral_spec
        return {"arch": "rgbpose-slowfast", "pose": net.pose_spec.to_dict(),
                "rgb": net.rgb_spec.to_dict(),
                "lateral": {"direction": lat.direction, "attach_points": list(lat.attach_points),
                            "temporal_stride": lat.temporal_stride, "kernel": lat.kernel}}
    raise TypeError(f"cannot checkpoint {type(net).__name__}")


def build_from_description(desc: dict, dtype=np.float32):
    arch = desc.get("arch")
    if arch == "pose-slowonly":
        return build_pose_slowonly(NetSpec.from_dict(desc["spec"]), dtype=dtype)
    if arch == "rgbpose-slowfast":
        lat = desc["lateral"]
        lateral = LateralSpec(lat["direction"], tuple(lat["attach_points"]),
                              lat["temporal_stride"], lat["kernel"])
        return build_rgbpose_slowfast(NetSpec.from_dict(desc["pose"]),
                                      NetSpec.from_dict(desc["rgb"]), lateral, dtype=dtype)
    raise SpecError(f"unknown architecture {arch!r} in checkpoint")


def _tensors(net):
    return list(net.named_parameters()) + list(net.named_buffers())


def save_checkpoint(net, path) -> None:
    meta = canonical_json(describe(net))
    tensors = _tensors(net)
    with open(path, "wb") as fh:
        fh.write(HNET_MAGIC + struct.pack("<II", HNET_VERSION, len(meta)) + meta)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack(f"<I{t.values.ndim}I", t.values.ndim, *t.values.shape))
            fh.write(np.ascontiguousarray(t.values, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    """Rebuild the network recorded in ``path`` and load its weights."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != HNET_MAGIC:
        raise ValueError(f"{path}: not an HNET checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != HNET_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    desc = json.loads(data[pos:pos + n].decode("utf-8"))
    pos += n
    net = build_from_description(desc, dtype)
    expected = dict(_tensors(net))
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    seen = set()
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, pos)
        name = data[pos + 4:pos + 4 + ln].decode("utf-8")
        pos += 4 + ln
        (ndim,) = struct.unpack_from("<I", data, pos)
        shape = struct.unpack_from(f"<{ndim}I", data, pos + 4)
        pos += 4 + 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        if name not in expected:
            raise ValueError(f"{path}: unexpected tensor {name!r}")
        t = expected[name]
        if t.values.shape != tuple(shape):
            raise ValueError(f"{path}: tensor {name!r} has shape {shape}, "
                             f"network expects {t.values.shape}")
        t.values = values.astype(dtype)
        seen.add(name)
    missing = set(expected) - seen
    if missing:
        raise ValueError(f"{path}: missing tensors {sorted(missing)[:3]}")
    net.eval()
    return net
