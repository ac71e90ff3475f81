"""From a synthetic skeleton clip to a heatmap volume and a few PGM slices.

Run: python3 demos/volume_walkthrough.py [out_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from heatvol import PipelineConfig, make_volume, render_slice, save_volume, tight_bbox
from heatvol.preprocess import fraction_spanned, sample_indices
from heatvol.synth import SynthActionSpec, generate_synthetic


def main(out_dir: str = "walkthrough_out") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    seq = generate_synthetic(SynthActionSpec(1, n_videos=1, seed=3))[0]
    print(f"clip {seq.video_id}: {seq.num_frames} frames of {seq.frame_height:.0f}x{seq.frame_width:.0f}, "
          f"{seq.frames[0].keypoints.shape[0]} person(s)")

    box = tight_bbox(seq)
    print(f"padded subject box x [{box.min_x:.1f}, {box.max_x:.1f}]  y [{box.min_y:.1f}, {box.max_y:.1f}]")

    for name in ("uniform", "stride"):
        cfg = PipelineConfig(frames=12, sampler=name)
        idx = sample_indices(seq.num_frames, cfg.sampler_spec(seed=0))
        print(f"{name:8s} picks {idx}  spanning {fraction_spanned(idx, seq.num_frames):.0%}")

    for mode in ("joint", "limb"):
        vol = make_volume(seq, PipelineConfig(mode=mode, frames=12), seed=0)
        v = vol.values
        print(f"{mode} volume {v.shape}: peak {v.max():.3f}, "
              f"{np.count_nonzero(v) / v.size:.1%} nonzero")
        save_volume(vol, out / f"{mode}.hvl")
        for c in (9, 10) if mode == "joint" else (0,):
            render_slice(vol, c, 6, out / f"{mode}_c{c}_t6.pgm")

    print(f"wrote volumes and slices to {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:2])
