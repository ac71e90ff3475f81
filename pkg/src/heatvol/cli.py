"""Command-line entry point: ``heatvol <command> [options]``.

Every command that writes files also writes ``manifest.json`` next to them
with the full effective configuration; ``heatvol replay`` reruns it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DivergenceError,
    EmptySubjectError,
    SchemaError,
    ShapeError,
    SpecError,
)
from .heatmap import load_volume, render_slice, save_volume
from .pipeline import SAMPLER_ALIASES, PipelineConfig, make_volume
from .preprocess import (
    SamplerSpec,
    crop_resize,
    drop_limb_keypoints,
    sample_indices,
    tight_bbox,
)
from .rng import derive_seed
from .skeleton import load_annotations, save_annotations

log = logging.getLogger("heatvol")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SCHEMA = 2
EXIT_IO = 3
EXIT_SPEC = 4
EXIT_DIVERGENCE = 5
EXIT_USAGE = 64

EXIT_CODES_HELP = """\
exit codes:
  0   success
  1   a check ran but failed (gradcheck above tolerance, toytrain below target)
  2   annotation schema or parse error (message names the line or video_id)
  3   I/O error (missing input, unwritable output)
  4   spec or shape error (bad --input-shape, network/shape mismatch)
  5   training diverged (non-finite loss)
  64  command-line usage error
"""

MANIFEST_NAME = "manifest.json"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt():
    return argparse.RawDescriptionHelpFormatter


# --- helpers -----------------------------------------------------------------------


def parse_shape(text: str, n: int = 4) -> tuple:
    """``"17x32x56x56"`` -> ``(17, 32, 56, 56)``."""
    try:
        dims = tuple(int(p) for p in text.lower().replace("×", "x").split("x"))
    except ValueError:
        dims = ()
    if len(dims) != n or min(dims) < 1:
        raise CliError(EXIT_SPEC, f"malformed shape {text!r}: expected {n} positive integers "
                                  f"joined by 'x', e.g. 17x32x56x56")
    return dims


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create output directory {out}: {exc}") from None
    return out


def write_manifest(out: Path, command: str, options: dict, files, extra=None) -> Path:
    """Manifest: command, effective options, and a digest of every output file.

    No timestamps or host details, so reruns produce an identical manifest.
    """
    manifest = {
        "tool": "heatvol",
        "version": __version__,
        "command": command,
        "options": options,
        "outputs": [{"path": str(Path(f).relative_to(out)), "sha256": sha256_file(f)}
                    for f in files],
    }
    if extra:
        manifest.update(extra)
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _options(args, drop=("out", "func", "verbose")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in drop}


def _load(path):
    try:
        return load_annotations(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


# --- commands ----------------------------------------------------------------------


def cmd_convert(args) -> int:
    cfg = PipelineConfig(mode=args.mode, sigma=args.sigma, crop=args.crop,
                         pad_ratio=args.pad_ratio, target_hw=(args.size, args.size),
                         frames=args.frames, sampler=args.sampler, stride=args.stride)
    seqs = _load(args.input)
    out = _out_dir(args.out)
    files = []
    for i, seq in enumerate(seqs):
        try:
            vol = make_volume(seq, cfg, derive_seed(args.seed, i))
        except (SchemaError, EmptySubjectError, ValueError) as exc:
            raise CliError(EXIT_SCHEMA, f"video {seq.video_id}: {exc}") from None
        path = out / f"{seq.video_id}.{args.mode}.hvl"
        save_volume(vol, path)
        files.append(path)
        log.info("%s -> %s %s", seq.video_id, path.name, vol.dims)
    write_manifest(out, "convert", _options(args), files,
                   {"pipeline": cfg.to_dict(), "input_sha256": sha256_file(args.input)})
    print(f"wrote {len(files)} volume(s) to {out}")
    return EXIT_OK


def _shape_rows(net, stage_outputs, static):
    rows = []
    for name, shape in static.items():
        actual = stage_outputs.get(name)
        actual = tuple(actual[1:]) if actual is not None else None
        rows.append({"stage": name, "expected": list(shape),
                     "actual": list(actual) if actual else None,
                     "match": actual == tuple(shape)})
    return rows


def _pretty(shape):
    c, t, h, w = shape
    return f"{c}x{t}x{h}x{w}  ({t}x{h}^2)" if h == w else f"{c}x{t}x{h}x{w}"


def cmd_shapecheck(args) -> int:
    from .net3d import (
        LateralSpec,
        build_pose_slowonly,
        build_rgbpose_slowfast,
        pose_slowonly_spec,
        rgb_slow_spec,
    )

    c, t, h, w = parse_shape(args.input_shape)
    if h != w:
        raise CliError(EXIT_SPEC, "only square inputs are supported (H == W)")
    try:
        pose_spec = pose_slowonly_spec(c, t, h, args.width, args.classes)
        if args.net == "pose-slowonly":
            net = build_pose_slowonly(pose_spec)
            pathways = {"pose": (net.backbone, (1, c, t, h, w))}
        else:
            rc, rt, rh, rw = parse_shape(args.rgb_shape)
            if rh != rw:
                raise CliError(EXIT_SPEC, "only square inputs are supported (H == W)")
            rgb_spec = rgb_slow_spec(rc, rt, rh, args.rgb_width, args.classes)
            net = build_rgbpose_slowfast(pose_spec, rgb_spec, LateralSpec())
            pathways = {"rgb": (net.rgb, (1, rc, rt, rh, rw)), "pose": (net.pose, (1, c, t, h, w))}
    except SpecError as exc:
        raise CliError(EXIT_SPEC, str(exc)) from None
    net.eval()
    if args.static:
        actual = {k: {n: (1,) + s for n, s in p.stage_shapes().items()}
                  for k, (p, _) in pathways.items()}
    else:
        if args.net == "pose-slowonly":
            net.forward(np.zeros(pathways["pose"][1], dtype=np.float32))
            actual = {"pose": net.backbone.stage_outputs}
        else:
            net.forward((np.zeros(pathways["pose"][1], np.float32),
                         np.zeros(pathways["rgb"][1], np.float32)))
            actual = net.stage_outputs
    report, ok = {}, True
    for kind, (pathway, _) in pathways.items():
        rows = _shape_rows(pathway, actual[kind], pathway.stage_shapes())
        report[kind] = rows
        print(f"{kind} pathway")
        for r in rows:
            flag = "ok" if r["match"] else "MISMATCH"
            print(f"  {r['stage']:<5} {_pretty(r['expected']):<28} {flag}")
            ok &= r["match"]
    if args.out:
        out = _out_dir(args.out)
        path = out / "shapes.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        write_manifest(out, "shapecheck", _options(args), [path])
    if not ok:
        print("static shape inference disagrees with the forward pass", file=sys.stderr)
        return EXIT_SPEC
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .net3d.checks import TARGETS

    names = list(TARGETS) if args.target == "all" else [args.target]
    results, ok = {}, True
    for name in names:
        t0 = time.perf_counter()
        rep = TARGETS[name](seed=args.seed, n_samples=args.samples, epsilon=args.epsilon)
        passed = rep.checked > 0 and rep.max_rel_error < args.tol
        ok &= passed
        results[name] = {"max_rel_error": rep.max_rel_error, "checked": rep.checked,
                         "skipped": rep.skipped, "passed": passed}
        print(f"{name:<11} max relative error {rep.max_rel_error:.3e} over {rep.checked} entries "
              f"({rep.skipped} at kinks)  {'PASS' if passed else 'FAIL'}  "
              f"[{time.perf_counter() - t0:.1f}s]")
    if args.out:
        out = _out_dir(args.out)
        path = out / "gradcheck.json"
        path.write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
        write_manifest(out, "gradcheck", _options(args), [path])
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _toy_setup(args):
    from .synth import CLASSES, SequenceDataset, SynthActionSpec, generate_synthetic, split_dataset

    if not 1 <= args.classes <= len(CLASSES):
        raise CliError(EXIT_USAGE, f"--classes must be between 1 and {len(CLASSES)}")
    _check_probability("--drop-p", args.drop_p)
    if not 0 < args.val_fraction < 1:
        raise CliError(EXIT_USAGE, "--val-fraction must lie strictly between 0 and 1")
    per_class, rem = divmod(args.videos, args.classes)
    if rem or per_class < 2:
        raise CliError(EXIT_USAGE, "--videos must be a multiple of --classes (>= 2 per class)")
    specs = [SynthActionSpec(c, per_class, args.min_length, args.noise, args.seed,
                             args.max_length) for c in range(args.classes)]
    clips = generate_synthetic(specs)
    train_set, held = split_dataset(clips, args.val_fraction, args.seed)
    cfg = PipelineConfig(mode=args.mode, sigma=args.sigma, target_hw=(args.size, args.size),
                         frames=args.frames, sampler=args.sampler, stride=args.stride)
    return (SequenceDataset(train_set, cfg, args.seed, args.drop_p),
            SequenceDataset(held, cfg, args.seed), held, cfg)


def _toy_net(args, channels):
    from .net3d import build_pose_slowonly

    return build_pose_slowonly(in_channels=channels, frames=args.frames, size=args.size,
                               base_channels=args.width, num_classes=args.classes,
                               seed=args.seed)


def _toy_hyper(args, stop_at=None):
    from .net3d import TrainConfig

    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       momentum=args.momentum, weight_decay=args.weight_decay,
                       lr_steps=tuple(args.lr_steps), lr_gamma=0.1, stop_at=stop_at)


def _print_epoch(rec):
    val = "-" if rec.val_acc is None else f"{rec.val_acc:.3f}"
    print(f"epoch {rec.epoch:>3}  loss {rec.loss:.4f}  train_acc {rec.train_acc:.3f}  "
          f"val_acc {val}  lr {rec.lr:g}  [{rec.seconds:.1f}s]", flush=True)


def cmd_toytrain(args) -> int:
    from .net3d import save_checkpoint, train

    t0 = time.perf_counter()
    train_ds, val_ds, held, cfg = _toy_setup(args)
    net = _toy_net(args, 17 if args.mode == "joint" else 19)
    print(f"{len(train_ds)} training / {len(val_ds)} held-out clips, input "
          f"{net.spec.input_shape}, width {args.width}")
    try:
        stop_at = args.target_acc if args.early_stop else None
        hist = train(net, train_ds, _toy_hyper(args, stop_at), args.seed, val_ds, _print_epoch)
    except DivergenceError as exc:
        raise CliError(EXIT_DIVERGENCE, str(exc)) from None
    final = hist.final.val_acc if hist.records else 0.0
    elapsed = time.perf_counter() - t0
    print(f"final held-out accuracy {final:.4f} (target {args.target_acc}) in {elapsed:.1f}s")
    files = []
    if args.out:
        out = _out_dir(args.out)
        hist.to_csv(out / "history.csv")
        save_checkpoint(net, out / "model.hnet")
        files = [out / "history.csv", out / "model.hnet"]
        if args.robustness:
            from .synth import run_robustness

            rep = run_robustness(net, held, args.p_values, args.seed, val_ds.eval_cfg)
            rep.to_csv(out / "robustness.csv")
            files.append(out / "robustness.csv")
            for r in rep.rows():
                print(f"  drop p={r['p']:<6g} accuracy {r['accuracy']:.3f} ({r['delta']:+.3f})")
        write_manifest(out, "toytrain", _options(args), files,
                       {"final_val_acc": final, "pipeline": cfg.to_dict()})
    return EXIT_OK if final >= args.target_acc else EXIT_CHECK_FAILED


def cmd_ablate(args) -> int:
    from .synth import ablation_to_csv, run_sampling_ablation

    train_ds, val_ds, _, cfg = _toy_setup(args)
    rows = run_sampling_ablation(train_ds.seqs, val_ds.seqs, lambda: _toy_net(args, 17),
                                 _toy_hyper(args), cfg, args.seed, args.stride, _print_epoch)
    for r in rows:
        print(f"{r.sampler:<8} val_acc {r.val_acc:.3f}  train_acc {r.train_acc:.3f}  "
              f"mean span {r.mean_span:.3f}")
    if args.out:
        out = _out_dir(args.out)
        ablation_to_csv(rows, out / "ablation.csv")
        write_manifest(out, "ablate", _options(args), [out / "ablation.csv"])
    return EXIT_OK


def _check_probability(name, p):
    if not 0 <= p <= 1:
        raise CliError(EXIT_USAGE, f"{name} must lie in [0, 1], got {p}")


def cmd_perturb(args) -> int:
    _check_probability("--p", args.p)
    seqs = _load(args.input)
    perturbed = [drop_limb_keypoints(s, args.p, derive_seed(args.seed, i))
                 for i, s in enumerate(seqs)]
    out = _out_dir(args.out)
    path = out / "perturbed.jsonl"
    save_annotations(perturbed, path)
    changed = sum(int(np.sum(a.all_keypoints()[:, 2] != b.all_keypoints()[:, 2]))
                  for a, b in zip(seqs, perturbed))
    write_manifest(out, "perturb", _options(args), [path],
                   {"input_sha256": sha256_file(args.input)})
    print(f"dropped {changed} keypoint score(s) across {len(seqs)} video(s) -> {path}")
    return EXIT_OK


def cmd_crop(args) -> int:
    seqs = _load(args.input)
    out = _out_dir(args.out)
    cropped, boxes = [], {}
    for s in seqs:
        try:
            box = tight_bbox(s, args.pad_ratio)
        except EmptySubjectError as exc:
            raise CliError(EXIT_SCHEMA, str(exc)) from None
        boxes[s.video_id] = list(box.as_tuple())
        cropped.append(crop_resize(s, box, (args.size, args.size)))
        log.info("%s box %s", s.video_id, box.as_tuple())
    path = out / "cropped.jsonl"
    save_annotations(cropped, path)
    (out / "boxes.json").write_text(json.dumps(boxes, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "crop", _options(args), [path, out / "boxes.json"],
                   {"input_sha256": sha256_file(args.input)})
    print(f"cropped {len(seqs)} video(s) -> {path}")
    return EXIT_OK


def cmd_sample(args) -> int:
    spec = SamplerSpec(SAMPLER_ALIASES[args.sampler], args.frames, args.stride, args.seed)
    idx = sample_indices(args.total_frames, spec)
    print(" ".join(map(str, idx)))
    if args.out:
        out = _out_dir(args.out)
        path = out / "indices.json"
        path.write_text(json.dumps({"indices": idx}) + "\n")
        write_manifest(out, "sample", _options(args), [path])
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        vol = load_volume(args.volume)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.volume}: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_SCHEMA, str(exc)) from None
    out = _out_dir(args.out)
    path = out / f"{Path(args.volume).stem}.c{args.channel}.t{args.frame}.pgm"
    try:
        render_slice(vol, args.channel, args.frame, path)
    except IndexError as exc:
        raise CliError(EXIT_SPEC, str(exc)) from None
    write_manifest(out, "render", _options(args), [path],
                   {"input_sha256": sha256_file(args.volume)})
    print(f"wrote {path}")
    return EXIT_OK


def cmd_replay(args) -> int:
    """Re-run the command recorded in a manifest, writing into --out."""
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.manifest}: {exc}") from None
    command = manifest.get("command")
    if command not in COMMANDS or command == "replay":
        raise CliError(EXIT_SCHEMA, f"manifest names unknown command {command!r}")
    from threadpoolctl import threadpool_limits

    ns = argparse.Namespace(**manifest["options"], out=args.out, verbose=args.verbose)
    ns.threads = resolve_threads(ns.threads)
    with threadpool_limits(limits=ns.threads):
        return COMMANDS[command][0](ns)


COMMANDS = {
    "convert": (cmd_convert, "annotations (JSON lines) -> one HVL1 volume per video"),
    "shapecheck": (cmd_shapecheck, "print per-stage output sizes and verify them by a forward pass"),
    "gradcheck": (cmd_gradcheck, "compare analytic gradients with central differences"),
    "toytrain": (cmd_toytrain, "train Pose-SlowOnly on the synthetic 3-class task"),
    "ablate": (cmd_ablate, "uniform vs fixed-stride sampling on the synthetic task"),
    "perturb": (cmd_perturb, "drop one limb keypoint per frame with probability p"),
    "crop": (cmd_crop, "subject-centred crop and resize of annotations"),
    "sample": (cmd_sample, "print the frame indices a sampler picks"),
    "render": (cmd_render, "write one volume slice as an 8-bit PGM image"),
    "replay": (cmd_replay, "re-run a recorded manifest"),
}


def _add_toy_options(p, epochs):
    g = p.add_argument_group("synthetic data and training")
    g.add_argument("--classes", type=int, default=3, help="number of action classes, 1-3 (default 3)")
    g.add_argument("--videos", type=int, default=300, help="total clips, split evenly over classes (default 300)")
    g.add_argument("--min-length", type=int, default=32, help="shortest clip in frames (default 32)")
    g.add_argument("--max-length", type=int, default=128, help="longest clip in frames (default 128)")
    g.add_argument("--noise", type=float, default=1.0, help="coordinate noise sigma in pixels (default 1.0)")
    g.add_argument("--val-fraction", type=float, default=0.2, help="held-out share per class (default 0.2)")
    g.add_argument("--mode", choices=("joint", "limb"), default="joint", help="heatmap kind (default joint)")
    g.add_argument("--sigma", type=float, default=0.6, help="Gaussian sigma in pixels (default 0.6)")
    g.add_argument("--size", type=int, default=56, help="volume height and width (default 56)")
    g.add_argument("--frames", type=int, default=8, help="frames per clip (default 8)")
    g.add_argument("--sampler", choices=("uniform", "stride"), default="uniform",
                   help="training sampler (default uniform; evaluation uses segment midpoints)")
    g.add_argument("--stride", type=int, default=2, help="stride for --sampler stride (default 2)")
    g.add_argument("--width", type=int, default=16, help="network base channel width (default 16)")
    g.add_argument("--epochs", type=int, default=epochs, help=f"training epochs (default {epochs})")
    g.add_argument("--batch-size", type=int, default=8, help="mini-batch size (default 8)")
    g.add_argument("--lr", type=float, default=0.03, help="learning rate (default 0.03)")
    g.add_argument("--lr-steps", type=int, nargs="*", default=[],
                   help="epochs (0-based) at which the learning rate is divided by 10")
    g.add_argument("--momentum", type=float, default=0.9, help="SGD momentum (default 0.9)")
    g.add_argument("--weight-decay", type=float, default=1e-4, help="L2 weight decay (default 1e-4)")
    g.add_argument("--drop-p", type=float, default=0.0,
                   help="limb-keypoint drop probability applied to training clips (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="heatvol", description=__doc__.splitlines()[0],
                     epilog=EXIT_CODES_HELP, formatter_class=_fmt())
    parser.add_argument("--version", action="version", version=f"heatvol {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="BLAS thread count (default: $HEATVOL_THREADS, else 1)")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name):
        func, helptext = COMMANDS[name]
        p = sub.add_parser(name, parents=[common], help=helptext, description=helptext,
                           epilog=EXIT_CODES_HELP, formatter_class=_fmt())
        p.set_defaults(func=func)
        return p

    p = add("convert")
    p.add_argument("--input", required=True, help="annotation file (JSON lines)")
    p.add_argument("--mode", choices=("joint", "limb"), default="joint",
                   help="joint maps (K=17 channels) or limb maps (one channel per edge)")
    p.add_argument("--sigma", type=float, default=0.6, help="Gaussian sigma in pixels (default 0.6)")
    p.add_argument("--crop", action=argparse.BooleanOptionalAction, default=True,
                   help="subject-centred cropping before resizing (default on)")
    p.add_argument("--pad-ratio", type=float, default=0.1, help="crop margin per side (default 0.1)")
    p.add_argument("--size", type=int, default=56, help="output height and width (default 56)")
    p.add_argument("--frames", type=int, default=32, help="frames per volume (default 32)")
    p.add_argument("--sampler", choices=("uniform", "stride", "det"), default="uniform",
                   help="uniform (random frame per segment), stride (fixed-stride window), "
                        "det (segment midpoints)")
    p.add_argument("--stride", type=int, default=2, help="frame stride for --sampler stride (default 2)")
    p.add_argument("--out", required=True, help="output directory")

    p = add("shapecheck")
    p.add_argument("--net", choices=("pose-slowonly", "rgbpose-slowfast"), default="pose-slowonly",
                   help="architecture (default pose-slowonly)")
    p.add_argument("--input-shape", default="17x32x56x56",
                   help="pose input CxTxHxW (default 17x32x56x56)")
    p.add_argument("--rgb-shape", default="3x8x224x224",
                   help="RGB input CxTxHxW for rgbpose-slowfast (default 3x8x224x224)")
    p.add_argument("--width", type=int, default=32, help="pose base channel width (default 32)")
    p.add_argument("--rgb-width", type=int, default=64, help="RGB base channel width (default 64)")
    p.add_argument("--classes", type=int, default=60, help="classifier outputs (default 60)")
    p.add_argument("--static", action="store_true",
                   help="compare static inference with itself only (skip the forward pass)")
    p.add_argument("--out", help="directory for shapes.json and a manifest")

    p = add("gradcheck")
    p.add_argument("--target", choices=("all", "linear", "conv3d", "bottleneck", "poolnet",
                                        "dual_loss", "micronet", "slowfast"), default="all",
                   help="operation or network to check (default all)")
    p.add_argument("--epsilon", type=float, default=1e-4, help="finite-difference step (default 1e-4)")
    p.add_argument("--samples", type=int, default=200, help="entries checked per target (default 200)")
    p.add_argument("--tol", type=float, default=1e-5, help="pass threshold on relative error (default 1e-5)")
    p.add_argument("--out", help="directory for gradcheck.json and a manifest")

    p = add("toytrain")
    _add_toy_options(p, epochs=30)
    p.add_argument("--target-acc", type=float, default=0.95,
                   help="exit 1 when final held-out accuracy is below this (default 0.95)")
    p.add_argument("--early-stop", action=argparse.BooleanOptionalAction, default=True,
                   help="stop after the first epoch whose held-out accuracy reaches "
                        "--target-acc (default on)")
    p.add_argument("--robustness", action="store_true",
                   help="after training, evaluate under limb-keypoint drop (writes robustness.csv: "
                        "p, accuracy, delta)")
    p.add_argument("--p-values", type=float, nargs="+", default=[0.0, 0.125, 0.25, 0.5, 1.0],
                   help="drop probabilities for --robustness")
    p.add_argument("--out", help="directory for history.csv (epoch, loss, train_acc, val_acc), "
                                 "model.hnet and a manifest")

    p = add("ablate")
    _add_toy_options(p, epochs=4)
    p.add_argument("--out", help="directory for ablation.csv (sampler, train_acc, val_acc, "
                                 "mean_span) and a manifest")

    p = add("perturb")
    p.add_argument("--input", required=True, help="annotation file (JSON lines)")
    p.add_argument("--p", type=float, required=True, help="per-frame drop probability in [0, 1]")
    p.add_argument("--out", required=True, help="directory for perturbed.jsonl and a manifest")

    p = add("crop")
    p.add_argument("--input", required=True, help="annotation file (JSON lines)")
    p.add_argument("--pad-ratio", type=float, default=0.1, help="margin per side (default 0.1)")
    p.add_argument("--size", type=int, default=56, help="target height and width (default 56)")
    p.add_argument("--out", required=True, help="directory for cropped.jsonl, boxes.json, manifest")

    p = add("sample")
    p.add_argument("--total-frames", type=int, required=True, help="video length T")
    p.add_argument("--frames", type=int, default=32, help="indices to draw (default 32)")
    p.add_argument("--sampler", choices=("uniform", "stride", "det"), default="uniform",
                   help="sampling strategy (default uniform)")
    p.add_argument("--stride", type=int, default=2, help="stride for --sampler stride (default 2)")
    p.add_argument("--out", help="directory for indices.json and a manifest")

    p = add("render")
    p.add_argument("--volume", required=True, help="HVL1 volume file")
    p.add_argument("--channel", type=int, default=0, help="joint or limb channel (default 0)")
    p.add_argument("--frame", type=int, default=0, help="frame index (default 0)")
    p.add_argument("--out", required=True, help="output directory for the PGM and a manifest")

    p = add("replay")
    p.add_argument("--manifest", required=True, help="manifest.json of an earlier run")
    p.add_argument("--out", required=True, help="output directory for the rerun")
    return parser


def resolve_threads(value) -> int:
    if value is None:
        value = os.environ.get("HEATVOL_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise CliError(EXIT_USAGE, f"invalid thread count {value!r}") from None
    if n < 1:
        raise CliError(EXIT_USAGE, "thread count must be at least 1")
    return n


def main(argv=None) -> int:
    from threadpoolctl import threadpool_limits

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.threads = resolve_threads(args.threads)
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except CliError as exc:
        print(f"heatvol: error: {exc}", file=sys.stderr)
        return exc.code
    except SchemaError as exc:
        print(f"heatvol: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SpecError, ShapeError) as exc:
        print(f"heatvol: spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"heatvol: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
