"""Train a narrow Pose-SlowOnly on a small synthetic task, then probe it.

A quick version of ``heatvol toytrain``: fewer clips, fewer frames and a
32x32 grid so it finishes in well under a minute on one core.

Run: python3 demos/toy_training.py
"""

from __future__ import annotations

import numpy as np

from heatvol import PipelineConfig
from heatvol.net3d import TrainConfig, build_pose_slowonly, train
from heatvol.net3d.predict import clip_logits
from heatvol.synth import SequenceDataset, run_robustness, split_dataset, synthetic_dataset


def main() -> None:
    clips = synthetic_dataset(n_per_class=30, seed=0)
    train_seqs, held = split_dataset(clips, val_fraction=0.25, seed=0)
    cfg = PipelineConfig(frames=8, target_hw=(32, 32))
    train_set = SequenceDataset(train_seqs, cfg, seed=0, drop_p=0.5)
    val_set = SequenceDataset(held, cfg, seed=0)

    net = build_pose_slowonly(frames=8, size=32, base_channels=8, num_classes=3, seed=0)
    hyper = TrainConfig(epochs=15, batch_size=8, lr=0.03, stop_at=1.0)
    train(net, train_set, hyper, seed=0, val_data=val_set,
          on_epoch=lambda r: print(f"epoch {r.epoch}  loss {r.loss:.3f}  "
                                   f"val_acc {r.val_acc:.3f}"))

    report = run_robustness(net, held, p_values=(0.0, 0.5, 1.0),
                            cfg=PipelineConfig(frames=8, target_hw=(32, 32), sampler="det"))
    for row in report.rows():
        print(f"limb drop p={row['p']:g}: accuracy {row['accuracy']:.3f}")

    seq = held[0]
    logits = clip_logits(net, seq, clips=4, pipeline=cfg, seed=0)
    votes = np.argmax(logits, axis=1)
    print(f"{seq.video_id} (label {seq.label}): per-clip votes {votes.tolist()}, "
          f"averaged prediction {int(np.argmax(logits.mean(axis=0)))}")


if __name__ == "__main__":
    main()
