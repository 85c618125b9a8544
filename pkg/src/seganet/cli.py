"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure. Every failure prints one diagnostic line to stderr.
"""
import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .augmentation import AugmentSpec, SliceSample, augment_pipeline
from .errors import ConfigError, DataError, NumericError, SeganetError
from .io import Dataset, load_checkpoint, load_dataset, read_lv_flags, save_checkpoint, write_dataset, write_phantom
from .metrics import compare_stacks
from .model import ModelConfig, segment_stack
from .phantom import PhantomSpec, generate_phantom
from .report import write_report
from .stacks import ImageStack, MaskStack
from .training import TrainConfig, slice_stream, train
from .volumetrics import atrial_volume_curve, cohort_compare, ejection_fractions, find_landmarks

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(x):
    return "undefined" if x is None else f"{x:.6g}"


def _channels(text):
    try:
        return tuple(int(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"channels must be comma-separated integers: {text!r}") from None


def _need(dataset, kind, where):
    stacks = getattr(dataset, kind)
    if stacks is None:
        raise DataError(f"{where}: dataset has no {kind}")
    return stacks


# ---- subcommands


def cmd_train(args):
    ds = load_dataset(args.data)
    images, masks = _need(ds, "images", args.data), _need(ds, "masks", args.data)
    dx, dy, _ = ds.spacing
    samples = [SliceSample(img[k], msk[k], (dx, dy)) for img, msk in zip(images, masks) for k in range(img.shape[0])]
    model_cfg = ModelConfig(encode_channels=args.channels)
    train_cfg = TrainConfig(
        iterations=args.iters, batch_size=args.batch, learning_rate=args.lr, seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )
    augment = None if args.no_augment else AugmentSpec(seed=args.seed)
    out = Path(args.out)

    def on_checkpoint(it, params):
        target = out if it == train_cfg.iterations else out.with_name(f"{out.stem}_{it:06d}{out.suffix}")
        save_checkpoint(target, params)

    def log(it, loss):
        if args.verbose:
            print(f"iteration {it} loss {loss:.6g}", file=sys.stderr)

    _, trace = train(model_cfg, train_cfg, samples, augment=augment, on_checkpoint=on_checkpoint, log=log)
    if args.loss_csv:
        trace.to_csv(args.loss_csv)
    final = _fmt(trace.values[-1]) if trace.values else "n/a"
    print(f"trained {train_cfg.iterations} iterations on {len(samples)} slices; final loss {final}; wrote {out}")


def cmd_segment(args):
    params = load_checkpoint(args.model)
    if not 0 < args.threshold < 1:
        raise ConfigError("threshold must lie in (0, 1)")
    ds = load_dataset(args.data)
    masks = [segment_stack(params, ImageStack(img, ds.spacing), args.threshold).mask for img in _need(ds, "images", args.data)]
    write_dataset(args.out, Dataset(ds.spacing, None, masks, ds.lv_flags, ds.subject, ds.group))
    print(f"segmented {len(masks)} phases into {args.out}")


def cmd_metrics(args):
    pred, gt = load_dataset(args.pred), load_dataset(args.gt)
    pm, gm = _need(pred, "masks", args.pred), _need(gt, "masks", args.gt)
    if len(pm) != len(gm):
        raise DataError(f"phase counts differ: {len(pm)} vs {len(gm)}")
    rows = ["subject,phase,dice,hd_mm,mcd_mm"]
    for p, (a, b) in enumerate(zip(pm, gm)):
        r = compare_stacks(MaskStack(a, pred.spacing), MaskStack(b, gt.spacing))
        rows.append(f"{gt.subject},{p},{_fmt(r.dice)},{_fmt(r.hausdorff_mm)},{_fmt(r.mcd_mm)}")
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"wrote {len(rows) - 1} rows to {args.out}")


def cmd_volumetrics(args):
    ds = load_dataset(args.masks)
    masks = _need(ds, "masks", args.masks)
    flags = read_lv_flags(args.lv_flags)
    if flags.size != ds.slices:
        raise DataError(f"{args.lv_flags}: {flags.size} flags for {ds.slices} slices")
    curve = atrial_volume_curve(masks, flags, ds.spacing)
    landmarks = find_landmarks(curve, args.smooth)
    bio = ejection_fractions(landmarks)
    prefix = Path(args.out_prefix)
    write_report(curve, landmarks, bio, prefix)
    lines = [
        f"max_phase = {landmarks.max_phase}",
        f"preA_phase = {landmarks.preA_phase}",
        f"min_phase = {landmarks.min_phase}",
        f"v_max_ml = {_fmt(landmarks.v_max_ml)}",
        f"v_preA_ml = {_fmt(landmarks.v_preA_ml)}",
        f"v_min_ml = {_fmt(landmarks.v_min_ml)}",
        f"ef_percent = {_fmt(bio.ef_percent)}",
        f"aef_percent = {_fmt(bio.aef_percent)}",
    ]
    prefix.with_name(prefix.name + "_landmarks.txt").write_text("\n".join(lines) + "\n")
    print(f"EF {bio.ef_percent:.2f}%  aEF {bio.aef_percent:.2f}%  "
          f"(max {landmarks.max_phase}, preA {landmarks.preA_phase}, min {landmarks.min_phase})")


def load_phantom_spec(path):
    if path is None:
        return PhantomSpec()
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read phantom spec {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: phantom spec must be a JSON object")
    known = {f.name for f in fields(PhantomSpec)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown phantom spec keys: {', '.join(unknown)}")
    for key in ("grid", "spacing", "peak_phases", "shape_ratios", "lv_semi_axes"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return PhantomSpec(**raw)


def cmd_phantom(args):
    ph = generate_phantom(load_phantom_spec(args.spec))
    write_phantom(args.out, ph)
    lm = ph.landmarks
    print(f"phantom written to {args.out}: max phase {lm['max_phase']}, preA phase {lm['preA_phase']}, "
          f"min phase {lm['min_phase']}")


def cmd_augment(args):
    ds = load_dataset(args.data)
    images, masks = _need(ds, "images", args.data), _need(ds, "masks", args.data)
    spec = AugmentSpec(seed=args.seed)
    dx, dy, _ = ds.spacing
    out_img, out_msk = [], []
    for p, (img, msk) in enumerate(zip(images, masks)):
        ai, am = np.empty_like(img), np.empty_like(msk)
        for k in range(img.shape[0]):
            s = augment_pipeline(SliceSample(img[k], msk[k], (dx, dy)), spec, slice_stream(args.seed, p, k))
            ai[k], am[k] = s.image, s.mask
        out_img.append(ai)
        out_msk.append(am)
    write_dataset(args.out, Dataset(ds.spacing, out_img, out_msk, ds.lv_flags, ds.subject, ds.group))
    print(f"augmented {len(images)} phases into {args.out}")


def _read_column(path, column):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: expected a header and at least one row")
    header = [h.strip() for h in rows[0]]
    idx = 0 if column is None else (header.index(column) if column in header else None)
    if idx is None:
        raise DataError(f"{path}: no column {column!r}")
    try:
        return [float(r[idx]) for r in rows[1:] if r]
    except (ValueError, IndexError):
        raise DataError(f"{path}: column {header[idx]!r} is not numeric") from None


def cmd_cohort(args):
    a, b = _read_column(args.group_a, args.column), _read_column(args.group_b, args.column)
    try:
        r = cohort_compare(a, b, paired=args.paired)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    kind = "paired" if r.paired else "welch"
    print(f"test {kind}  t {r.t:.6g}  df {r.df:.6g}  p {r.p:.6g}  "
          f"a {r.mean_a:.6g} ± {r.std_a:.6g} (n={len(a)})  b {r.mean_b:.6g} ± {r.std_b:.6g} (n={len(b)})")


def build_parser():
    parser = _Parser(prog="seganet", description="Left-atrium segmentation and volumetric biomarkers.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train a model on a dataset with masks")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=TrainConfig.iterations)
    p.add_argument("--batch", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=_channels, default=ModelConfig.encode_channels)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--loss-csv")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="segment every phase of a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("metrics", help="compare predicted and reference masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("volumetrics", help="volume curve, landmarks, EF and aEF")
    p.add_argument("--masks", required=True)
    p.add_argument("--lv-flags", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--smooth", type=int, default=1)
    p.set_defaults(func=cmd_volumetrics)

    p = sub.add_parser("phantom", help="write a synthetic dataset with analytic volumes")
    p.add_argument("--spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("augment", help="write augmented copies of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("cohort", help="t-test between two groups of biomarker values")
    p.add_argument("--group-a", required=True)
    p.add_argument("--group-b", required=True)
    p.add_argument("--column")
    p.add_argument("--paired", action="store_true")
    p.set_defaults(func=cmd_cohort)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"seganet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"seganet: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"seganet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, SeganetError, OSError, ValueError) as exc:
        print(f"seganet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
