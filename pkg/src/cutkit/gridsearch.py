"""Patch-length selection by repeated train/validate runs.

For every candidate cutout length the dataset is re-split 90/10, a fresh net
is trained with that length appended to the base chain, and the validation
accuracy recorded; rows report the mean and a normal-approximation 95%
confidence interval over runs. Including length 0 in the sweep gives the
no-cutout baseline row (a zero-length patch is an identity transform).

Seed protocol: run r of every length uses split seed derived from
(cfg.seed, r) and train/init seed derived from (cfg.seed, r, 1), so runs are
paired across lengths (same splits, same inits) and the only difference
within a pair is the patch length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .augment import CutoutParams
from .datasets import Dataset, split_train_val
from .errors import DivergenceError, EmptyDatasetError
from .pipeline import CutoutStage, TransformChain, chain_stats
from .rng import derive_seed
from .smallnet import ArchDescriptor, SmallCnn, TrainConfig, evaluate, train

VAL_FRACTION = 0.10
CI_Z = 1.96


@dataclass(frozen=True)
class GridRow:
    """Aggregates one patch length's runs. `run_accuracies` pairs (run index,
    validation accuracy) for completed runs; diverged runs are listed in
    `failed_runs` and excluded from the statistics."""

    length: int
    run_accuracies: tuple
    failed_runs: tuple
    mean: float
    ci_half_width: float
    single_run: bool


@dataclass(frozen=True)
class GridSearchReport:
    rows: tuple
    runs_per_length: int


def _row_stats(length: int, completed: list, failed: list) -> GridRow:
    accs = [acc for _, acc in completed]
    n = len(accs)
    if n == 0:
        mean, half = math.nan, 0.0
    elif n == 1:
        mean, half = accs[0], 0.0
    else:
        mean = sum(accs) / n
        s = math.sqrt(sum((a - mean) ** 2 for a in accs) / (n - 1))
        half = CI_Z * s / math.sqrt(n)
    return GridRow(
        length=length,
        run_accuracies=tuple(completed),
        failed_runs=tuple(failed),
        mean=mean,
        ci_half_width=half,
        single_run=n == 1,
    )


def run_grid(
    ds: Dataset,
    lengths,
    runs_per_length: int,
    base_chain: TransformChain,
    cfg: TrainConfig,
    arch: ArchDescriptor,
    mode: str = "always_clipped",
    workers: int = 1,
    queue_capacity: int = 4,
) -> GridSearchReport:
    """Sweep cutout lengths with `runs_per_length` independent runs each.

    Every run trains a freshly initialized net on a fresh 90/10 split and
    scores it on the held-out 10%. Bit-identical reports for identical
    inputs and seeds.
    """
    lengths = [int(l) for l in lengths]
    if not lengths:
        raise ValueError("lengths must be non-empty")
    if any(l < 0 for l in lengths):
        raise ValueError(f"lengths must be >= 0, got {lengths}")
    if runs_per_length < 1:
        raise ValueError(f"runs_per_length must be >= 1, got {runs_per_length}")
    if not ds.samples:
        raise EmptyDatasetError("grid search needs a non-empty dataset")

    stats = chain_stats(base_chain)
    rows = []
    for length in lengths:
        chain = TransformChain(base_chain.stages + (CutoutStage(CutoutParams(length, mode)),))
        completed, failed = [], []
        for run in range(runs_per_length):
            split_seed = derive_seed(cfg.seed, run)
            train_seed = derive_seed(cfg.seed, run, 1)
            train_ds, val_ds = split_train_val(ds, VAL_FRACTION, split_seed)
            net = SmallCnn.init(arch, train_seed)
            run_cfg = replace(cfg, seed=train_seed)
            try:
                train(net, train_ds, chain, run_cfg, workers=workers, queue_capacity=queue_capacity)
            except DivergenceError:
                failed.append(run)
                continue
            completed.append((run, evaluate(net, val_ds, cfg.batch_size, stats)))
        rows.append(_row_stats(length, completed, failed))
    return GridSearchReport(tuple(rows), runs_per_length)


def select_length(report: GridSearchReport) -> int:
    """Length with the highest mean validation accuracy; ties go to the
    smaller length. Rows whose runs all failed are skipped."""
    if not report.rows:
        raise ValueError("report has no rows")
    scored = [r for r in report.rows if math.isfinite(r.mean)]
    if not scored:
        raise ValueError("every run in the report failed; nothing to select")
    best = max(scored, key=lambda r: (r.mean, -r.length))
    return best.length


def runs_csv_text(report: GridSearchReport) -> str:
    """Per-run CSV: length, run, val_acc (completed runs only)."""
    lines = ["length,run,val_acc\n"]
    for row in report.rows:
        for run, acc in row.run_accuracies:
            lines.append(f"{row.length},{run},{acc!r}\n")
    return "".join(lines)


def summary_csv_text(report: GridSearchReport) -> str:
    """Per-length CSV: length, mean, ci_half_width (empty mean if all runs failed)."""
    lines = ["length,mean,ci_half_width\n"]
    for row in report.rows:
        mean = "" if math.isnan(row.mean) else repr(row.mean)
        lines.append(f"{row.length},{mean},{row.ci_half_width!r}\n")
    return "".join(lines)
