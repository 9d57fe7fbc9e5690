"""Command-line driver.

Subcommands: preview, train, gridsearch, analyze, throughput. Every command
writes its outputs plus a run manifest (JSON) into --out-dir; re-running the
manifest's argv reproduces the outputs bit-exactly in single-worker mode
(the throughput command's timing numbers are the one exception).

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    PROFILE_LAYERS,
    compare_profiles,
    comparison_json_text,
    profile_dataset,
    write_profile_csv,
)
from .augment import CUTOUT_MODES, CutoutParams, denormalize
from .datasets import (
    RAW_MAGIC,
    Dataset,
    compute_stats,
    make_occlusion_dataset,
    parse_cifar10,
    parse_cifar100,
    parse_raw,
    parse_stl10,
    split_train_val,
)
from .errors import DivergenceError, NumericError
from .gridsearch import run_grid, runs_csv_text, select_length, summary_csv_text
from .pipeline import (
    CropStage,
    CutoutStage,
    HflipStage,
    LoaderConfig,
    NormalizeStage,
    PadStage,
    TransformChain,
    apply_chain,
    throughput_probe,
)
from .ppm import write_ppm
from .smallnet import (
    ArchDescriptor,
    SmallCnn,
    TrainConfig,
    load_checkpoint,
    report_header_line,
    report_row_line,
    save_checkpoint,
    train,
)

SYNTHETIC_PREFIX = "synthetic"
DEFAULT_SYNTHETIC_COUNT = 512


class InputError(ValueError):
    """Bad invocation or unreadable input; maps to exit code 2."""


# ---------------------------------------------------------------- helpers

def _int_list(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}") from None


def _load_dataset(args) -> Dataset:
    """Resolve --dataset/--labels/--format into a parsed Dataset.

    `--dataset synthetic[:N]` builds the bundled occlusion dataset (N samples,
    generation seed = --seed) instead of reading a file.
    """
    spec = args.dataset
    if spec == SYNTHETIC_PREFIX or spec.startswith(SYNTHETIC_PREFIX + ":"):
        n = DEFAULT_SYNTHETIC_COUNT
        if ":" in spec:
            try:
                n = int(spec.split(":", 1)[1])
            except ValueError:
                raise InputError(f"bad synthetic dataset spec {spec!r}; use synthetic[:COUNT]")
        return make_occlusion_dataset(n, seed=args.seed)

    path = Path(spec)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise InputError(f"cannot read dataset {path}: {e}") from e
    labels = None
    if args.labels is not None:
        try:
            labels = Path(args.labels).read_bytes()
        except OSError as e:
            raise InputError(f"cannot read labels {args.labels}: {e}") from e

    fmt = args.format
    if fmt == "auto":
        fmt = _detect_format(data, labels is not None)
    if fmt == "stl10":
        if labels is None:
            raise InputError("stl10 parsing needs --labels with the label file")
        return parse_stl10(data, labels)
    if fmt == "raw":
        return parse_raw(data)
    if fmt == "cifar10":
        return parse_cifar10(data)
    if fmt == "cifar100":
        return parse_cifar100(data)
    raise InputError(f"unknown format {fmt!r}")


def _detect_format(data: bytes, have_labels: bool) -> str:
    if data[: len(RAW_MAGIC)] == RAW_MAGIC:
        return "raw"
    if have_labels:
        return "stl10"
    fits10 = len(data) > 0 and len(data) % 3073 == 0
    fits100 = len(data) > 0 and len(data) % 3074 == 0
    if fits10 and not fits100:
        return "cifar10"
    if fits100 and not fits10:
        return "cifar100"
    raise InputError(
        "cannot auto-detect the dataset format from its length; pass --format explicitly"
    )


def _build_chain(stats, args, cutout_length=None) -> TransformChain:
    """normalize [-> pad -> crop -> hflip] [-> cutout]; flag-driven."""
    stages = [NormalizeStage(stats)]
    if args.pad > 0:
        stages.append(PadStage(args.pad))
    if args.crop > 0:
        stages.append(CropStage(args.crop, args.crop))
    if args.hflip:
        stages.append(HflipStage())
    if cutout_length is not None:
        stages.append(CutoutStage(CutoutParams(cutout_length, args.cutout_mode)))
    return TransformChain(tuple(stages))


def _chain_config(args, cutout_length=None) -> dict:
    return {
        "pad": args.pad,
        "crop": args.crop,
        "hflip": bool(args.hflip),
        "cutout_length": cutout_length,
        "cutout_mode": args.cutout_mode if cutout_length is not None else None,
    }


def _dataset_config(args) -> dict:
    return {
        "dataset": args.dataset,
        "labels": args.labels,
        "format": args.format,
    }


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, command: str, config: dict, outputs: list) -> Path:
    doc = {
        "tool": "cutkit",
        "version": __version__,
        "command": command,
        "argv": args.full_argv,
        "seed": args.seed,
        "workers": args.workers,
        "config": config,
        "outputs": sorted(outputs),
    }
    path = out / f"{command}_manifest.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _train_config_from_args(args, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr0=args.lr0,
        milestones=tuple(_int_list(args.milestones)),
        factor=args.factor,
        momentum=args.momentum,
        nesterov=not args.no_nesterov,
        weight_decay=args.weight_decay,
        seed=seed,
    )


def _arch_from_args(args, chain: TransformChain, ds: Dataset) -> ArchDescriptor:
    c, h, w = chain.output_shape(ds.image_shape)
    conv_channels = _int_list(args.conv_channels)
    if len(conv_channels) != 2:
        raise InputError(f"--conv-channels wants two values, got {args.conv_channels!r}")
    return ArchDescriptor(
        in_channels=c,
        in_h=h,
        in_w=w,
        class_count=ds.class_count,
        conv_channels=tuple(conv_channels),
        dropout_p=args.dropout_p,
    )


# ---------------------------------------------------------------- commands

def cmd_preview(args) -> int:
    ds = _load_dataset(args)
    out = _out_dir(args)
    count = args.count
    if count < 1:
        raise InputError(f"--count must be >= 1, got {count}")
    if count > len(ds.samples):
        raise InputError(f"--count {count} exceeds the dataset's {len(ds.samples)} samples")
    stats = compute_stats(ds)
    chain = _build_chain(stats, args, cutout_length=args.cutout_length)
    outputs = []
    for i in range(count):
        sample = ds.samples[i]
        augmented = apply_chain(sample, chain, epoch=0, index=i, global_seed=args.seed)
        orig_path = out / f"sample_{i:03d}_original.ppm"
        aug_path = out / f"sample_{i:03d}_augmented.ppm"
        write_ppm(orig_path, sample.image)
        write_ppm(aug_path, denormalize(augmented.image, stats))
        outputs += [orig_path.name, aug_path.name]
    config = {
        **_dataset_config(args),
        **_chain_config(args, args.cutout_length),
        "count": count,
    }
    _write_manifest(out, args, "preview", config, outputs)
    print(f"wrote {count} sample pairs to {out}")
    return 0


def cmd_train(args) -> int:
    ds = _load_dataset(args)
    out = _out_dir(args)

    eval_ds = None
    if args.eval_dataset is not None:
        eval_args = argparse.Namespace(**vars(args))
        eval_args.dataset = args.eval_dataset
        eval_args.labels = args.eval_labels
        eval_ds = _load_dataset(eval_args)
    elif args.val_fraction > 0:
        ds, eval_ds = split_train_val(ds, args.val_fraction, args.seed)

    stats = compute_stats(ds)
    chain = _build_chain(stats, args, cutout_length=args.cutout_length)
    arch = _arch_from_args(args, chain, ds)
    cfg = _train_config_from_args(args, args.seed)
    net = SmallCnn.init(arch, cfg.seed)

    report_path = out / "train_report.csv"
    ckpt_path = out / "checkpoint.cutnet"
    config = {
        **_dataset_config(args),
        **_chain_config(args, args.cutout_length),
        "eval_dataset": args.eval_dataset,
        "val_fraction": args.val_fraction if args.eval_dataset is None else None,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr0": cfg.lr0,
        "milestones": list(cfg.milestones),
        "factor": cfg.factor,
        "momentum": cfg.momentum,
        "nesterov": cfg.nesterov,
        "weight_decay": cfg.weight_decay,
        "conv_channels": list(arch.conv_channels),
        "dropout_p": arch.dropout_p,
        "queue_capacity": args.queue_capacity,
    }

    with open(report_path, "w", encoding="utf-8") as report_file:
        report_file.write(report_header_line())

        def on_epoch(row):
            report_file.write(report_row_line(row))
            report_file.flush()

        try:
            report = train(
                net,
                ds,
                chain,
                cfg,
                eval_ds=eval_ds,
                workers=args.workers,
                queue_capacity=args.queue_capacity,
                on_epoch=on_epoch,
            )
        except DivergenceError as e:
            _write_manifest(out, args, "train", config, [report_path.name])
            print(f"error: {e}; partial report kept at {report_path}", file=sys.stderr)
            return 3

    save_checkpoint(ckpt_path, net)
    outputs = [report_path.name, ckpt_path.name]
    _write_manifest(out, args, "train", config, outputs)
    last = report.rows[-1]
    summary = f"epoch {last.epoch}: train_acc={last.train_acc:.4f}"
    if not math.isnan(last.eval_acc):
        summary += f" eval_acc={last.eval_acc:.4f}"
    print(summary)
    return 0


def cmd_gridsearch(args) -> int:
    ds = _load_dataset(args)
    out = _out_dir(args)
    lengths = _int_list(args.lengths)
    if not lengths:
        raise InputError("--lengths must name at least one patch length")

    stats = compute_stats(ds)
    base_chain = _build_chain(stats, args, cutout_length=None)
    arch = _arch_from_args(args, base_chain, ds)
    cfg = _train_config_from_args(args, args.seed)
    report = run_grid(
        ds,
        lengths,
        args.runs,
        base_chain,
        cfg,
        arch,
        mode=args.cutout_mode,
        workers=args.workers,
        queue_capacity=args.queue_capacity,
    )
    runs_path = out / "gridsearch_runs.csv"
    summary_path = out / "gridsearch_summary.csv"
    runs_path.write_text(runs_csv_text(report), encoding="utf-8")
    summary_path.write_text(summary_csv_text(report), encoding="utf-8")
    config = {
        **_dataset_config(args),
        **_chain_config(args, None),
        "cutout_mode": args.cutout_mode,
        "lengths": lengths,
        "runs": args.runs,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr0": cfg.lr0,
        "milestones": list(cfg.milestones),
        "factor": cfg.factor,
        "momentum": cfg.momentum,
        "nesterov": cfg.nesterov,
        "weight_decay": cfg.weight_decay,
        "conv_channels": _int_list(args.conv_channels),
        "dropout_p": args.dropout_p,
        "queue_capacity": args.queue_capacity,
    }
    _write_manifest(out, args, "gridsearch", config, [runs_path.name, summary_path.name])
    print(f"selected length: {select_length(report)}")
    return 0


def cmd_analyze(args) -> int:
    ds = _load_dataset(args)
    out = _out_dir(args)
    layers = args.layers.split(",") if args.layers else list(PROFILE_LAYERS)
    for layer in layers:
        if layer not in PROFILE_LAYERS:
            raise InputError(f"unknown layer {layer!r}; choose from {','.join(PROFILE_LAYERS)}")
    net_a = load_checkpoint(args.checkpoint_a)
    net_b = load_checkpoint(args.checkpoint_b)
    stats = compute_stats(ds)
    outputs = []
    for layer in layers:
        prof_a = profile_dataset(net_a, ds, layer, stats=stats)
        prof_b = profile_dataset(net_b, ds, layer, stats=stats)
        a_path = out / f"profile_a_{layer}.csv"
        b_path = out / f"profile_b_{layer}.csv"
        write_profile_csv(a_path, prof_a)
        write_profile_csv(b_path, prof_b)
        summary = compare_profiles(prof_a, prof_b)
        cmp_path = out / f"compare_{layer}.json"
        cmp_path.write_text(comparison_json_text(summary), encoding="utf-8")
        outputs += [a_path.name, b_path.name, cmp_path.name]
        print(
            f"{layer}: head_ratio={summary['head_ratio']:.4f} "
            f"tail_ratio={summary['tail_ratio']:.4f}"
        )
    config = {
        **_dataset_config(args),
        "checkpoint_a": args.checkpoint_a,
        "checkpoint_b": args.checkpoint_b,
        "layers": layers,
    }
    _write_manifest(out, args, "analyze", config, outputs)
    return 0


def cmd_throughput(args) -> int:
    ds = _load_dataset(args)
    out = _out_dir(args)
    stats = compute_stats(ds)
    chain = _build_chain(stats, args, cutout_length=args.cutout_length)
    cfg = LoaderConfig(
        batch_size=args.batch_size,
        shuffle_seed=args.seed,
        worker_count=args.workers,
        queue_capacity=args.queue_capacity,
    )
    result = throughput_probe(ds, chain, cfg)
    line = json.dumps(result, sort_keys=True)
    print(line)
    json_path = out / "throughput.json"
    json_path.write_text(line + "\n", encoding="utf-8")
    config = {
        **_dataset_config(args),
        **_chain_config(args, args.cutout_length),
        "batch_size": args.batch_size,
        "queue_capacity": args.queue_capacity,
    }
    _write_manifest(out, args, "throughput", config, [json_path.name])
    return 0


# ---------------------------------------------------------------- parser

def _add_dataset_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument(
        "--dataset",
        required=required,
        default=None if required else SYNTHETIC_PREFIX,
        help="dataset file, or 'synthetic[:COUNT]' for the bundled occlusion dataset",
    )
    p.add_argument("--labels", default=None, help="label file (separate-label formats)")
    p.add_argument(
        "--format",
        choices=("auto", "cifar10", "cifar100", "stl10", "raw"),
        default="auto",
        help="dataset container format (default: auto-detect)",
    )


def _add_chain_flags(p: argparse.ArgumentParser, pad=0, crop=0, hflip=False):
    p.add_argument("--pad", type=int, default=pad, help="zero-pad border before cropping")
    p.add_argument("--crop", type=int, default=crop, help="random-crop side (0 = no crop)")
    if hflip:
        p.add_argument(
            "--no-hflip", dest="hflip", action="store_false", help="disable horizontal flips"
        )
    else:
        p.add_argument("--hflip", action="store_true", help="random horizontal flips")
    p.add_argument(
        "--cutout-mode",
        choices=CUTOUT_MODES,
        default="always_clipped",
        help="patch placement rule",
    )


def _add_train_flags(p: argparse.ArgumentParser, epochs=10):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr0", type=float, default=0.1, help="initial learning rate")
    p.add_argument(
        "--milestones", default="", help="comma-separated epochs where lr divides by --factor"
    )
    p.add_argument("--factor", type=float, default=5.0, help="lr division factor at milestones")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--no-nesterov", action="store_true", help="use classical momentum")
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--dropout-p", type=float, default=0.3)
    p.add_argument("--conv-channels", default="32,64", help="channels of the two conv layers")
    p.add_argument("--queue-capacity", type=int, default=4, help="max prepared batches in flight")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cutkit",
        description="Image augmentation pipelines, a small CNN trainer, and analysis tools.",
    )
    parser.add_argument("--version", action="version", version=f"cutkit {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global seed")
    common.add_argument("--workers", type=int, default=1, help="loader worker processes")
    common.add_argument("--out-dir", default=".", help="directory for outputs and the manifest")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preview", parents=[common], help="write original/augmented PPM pairs")
    _add_dataset_flags(p)
    _add_chain_flags(p)
    p.add_argument("--cutout-length", type=int, default=8)
    p.add_argument("--count", type=int, default=4, help="number of sample pairs")
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("train", parents=[common], help="train the small CNN")
    _add_dataset_flags(p)
    _add_chain_flags(p)
    _add_train_flags(p)
    p.add_argument("--cutout-length", type=int, default=0, help="0 disables masking")
    p.add_argument("--eval-dataset", default=None, help="held-out dataset file")
    p.add_argument("--eval-labels", default=None)
    p.add_argument(
        "--val-fraction",
        type=float,
        default=0.1,
        help="held-out fraction when no --eval-dataset (0 = no eval column)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", parents=[common], help="sweep cutout patch lengths")
    _add_dataset_flags(p)
    _add_chain_flags(p)
    _add_train_flags(p)
    p.add_argument("--lengths", default="0,4,8,12,16", help="comma-separated patch lengths")
    p.add_argument("--runs", type=int, default=5, help="runs per length")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("analyze", parents=[common], help="compare activation profiles")
    _add_dataset_flags(p)
    p.add_argument("--checkpoint-a", required=True, help="baseline checkpoint")
    p.add_argument("--checkpoint-b", required=True, help="comparison checkpoint")
    p.add_argument("--layers", default="", help=f"subset of {','.join(PROFILE_LAYERS)}")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("throughput", parents=[common], help="measure loader throughput")
    _add_dataset_flags(p, required=False)
    _add_chain_flags(p, pad=2, hflip=True)
    p.add_argument("--cutout-length", type=int, default=8)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--queue-capacity", type=int, default=4)
    p.set_defaults(func=cmd_throughput)

    return parser


def main(argv=None) -> int:
    full_argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(full_argv)
    args.full_argv = full_argv
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
