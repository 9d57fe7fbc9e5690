from __future__ import annotations

import math

import numpy as np
import pytest

from cutkit.datasets import Dataset, compute_stats, split_train_val
from cutkit.errors import EmptyDatasetError
from cutkit.gridsearch import (
    GridRow,
    GridSearchReport,
    VAL_FRACTION,
    run_grid,
    runs_csv_text,
    select_length,
    summary_csv_text,
)
from cutkit.pipeline import NormalizeStage, TransformChain
from cutkit.rng import derive_seed
from cutkit.smallnet import ArchDescriptor, SmallCnn, TrainConfig, evaluate, train
from cutkit.tensor import Image, LabeledSample


def grid_dataset(seed=0, n=60):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        label = i % 2
        shift = 0.65 if label else 0.35
        data = np.clip(rng.normal(shift, 0.08, size=(1, 8, 8)), 0.0, 1.0).astype(np.float32)
        samples.append(LabeledSample(Image(data), label))
    return Dataset(tuple(samples), 2, f"grid{seed}")


ARCH = ArchDescriptor(1, 8, 8, 2, conv_channels=(2, 4), dropout_p=0.0)


def quick_cfg(seed=30, epochs=3):
    return TrainConfig(
        epochs=epochs, batch_size=16, lr0=0.05, weight_decay=0.0, seed=seed
    )


def row(length, mean, accs=None, failed=(), single=False):
    accs = tuple(enumerate(accs or [])) if accs else ()
    return GridRow(length, accs, tuple(failed), mean, 0.0, single)


# ------------------------------------------------------------- run_grid

def test_run_grid_shape_and_determinism():
    ds = grid_dataset()
    chain = TransformChain((NormalizeStage(compute_stats(ds)),))
    a = run_grid(ds, [0, 2], 2, chain, quick_cfg(), ARCH)
    b = run_grid(ds, [0, 2], 2, chain, quick_cfg(), ARCH)
    assert [r.length for r in a.rows] == [0, 2]
    assert a.runs_per_length == 2
    for ra, rb in zip(a.rows, b.rows):
        assert ra == rb
    for r in a.rows:
        assert len(r.run_accuracies) == 2 and not r.failed_runs
        assert not r.single_run


def test_run_grid_length_zero_matches_direct_training():
    # the length-0 row's run 0 must equal training without any cutout stage
    ds = grid_dataset(seed=1)
    stats = compute_stats(ds)
    chain = TransformChain((NormalizeStage(stats),))
    cfg = quick_cfg(seed=77)
    report = run_grid(ds, [0], 1, chain, cfg, ARCH)

    split_seed = derive_seed(cfg.seed, 0)
    train_seed = derive_seed(cfg.seed, 0, 1)
    tr, va = split_train_val(ds, VAL_FRACTION, split_seed)
    net = SmallCnn.init(ARCH, train_seed)
    from dataclasses import replace

    train(net, tr, chain, replace(cfg, seed=train_seed))
    direct = evaluate(net, va, cfg.batch_size, stats)
    assert report.rows[0].run_accuracies == ((0, direct),)


def test_run_grid_single_run_flagged():
    ds = grid_dataset(seed=2)
    chain = TransformChain((NormalizeStage(compute_stats(ds)),))
    report = run_grid(ds, [0], 1, chain, quick_cfg(), ARCH)
    assert report.rows[0].single_run
    assert report.rows[0].ci_half_width == 0.0
    assert report.rows[0].mean == report.rows[0].run_accuracies[0][1]


def test_run_grid_ci_from_sample_std():
    ds = grid_dataset(seed=3)
    chain = TransformChain((NormalizeStage(compute_stats(ds)),))
    report = run_grid(ds, [2], 3, chain, quick_cfg(seed=5), ARCH)
    accs = [a for _, a in report.rows[0].run_accuracies]
    mean = sum(accs) / 3
    s = math.sqrt(sum((a - mean) ** 2 for a in accs) / 2)
    assert report.rows[0].mean == pytest.approx(mean)
    assert report.rows[0].ci_half_width == pytest.approx(1.96 * s / math.sqrt(3))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_run_grid_divergence_goes_to_failed_runs():
    ds = grid_dataset(seed=4)
    chain = TransformChain((NormalizeStage(compute_stats(ds)),))
    cfg = TrainConfig(epochs=3, batch_size=16, lr0=1e18, weight_decay=0.0, seed=6)
    report = run_grid(ds, [0], 2, chain, cfg, ARCH)
    r = report.rows[0]
    assert r.failed_runs == (0, 1)
    assert not r.run_accuracies
    assert math.isnan(r.mean)


def test_run_grid_validation():
    ds = grid_dataset(seed=5)
    chain = TransformChain(())
    with pytest.raises(ValueError):
        run_grid(ds, [], 1, chain, quick_cfg(), ARCH)
    with pytest.raises(ValueError):
        run_grid(ds, [-1], 1, chain, quick_cfg(), ARCH)
    with pytest.raises(ValueError):
        run_grid(ds, [0], 0, chain, quick_cfg(), ARCH)
    with pytest.raises(EmptyDatasetError):
        run_grid(Dataset((), 2, "none"), [0], 1, chain, quick_cfg(), ARCH)


def test_runs_are_paired_across_lengths():
    # same run index -> same split and same init, so the only difference
    # between lengths is the augmentation; epoch-0 accuracy pairing is
    # implied by the seed protocol, checked here via the report seeds
    ds = grid_dataset(seed=6)
    chain = TransformChain((NormalizeStage(compute_stats(ds)),))
    cfg = quick_cfg(seed=8, epochs=1)
    report = run_grid(ds, [0, 0], 2, chain, cfg, ARCH)
    a, b = report.rows
    assert a.run_accuracies == b.run_accuracies  # identical length -> identical runs


# ------------------------------------------------------------- selection

def test_select_length_picks_best_mean():
    report = GridSearchReport((row(0, 0.81), row(8, 0.93), row(16, 0.90)), 5)
    assert select_length(report) == 8


def test_select_length_tie_prefers_smaller():
    report = GridSearchReport((row(12, 0.9), row(4, 0.9), row(8, 0.9)), 5)
    assert select_length(report) == 4


def test_select_length_skips_all_failed_rows():
    report = GridSearchReport(
        (row(0, math.nan, failed=(0, 1)), row(8, 0.7)), 2
    )
    assert select_length(report) == 8


def test_select_length_all_failed_raises():
    report = GridSearchReport((row(0, math.nan, failed=(0,)),), 1)
    with pytest.raises(ValueError):
        select_length(report)
    with pytest.raises(ValueError):
        select_length(GridSearchReport((), 1))


# ------------------------------------------------------------- CSV artifacts

def test_runs_csv_schema():
    report = GridSearchReport(
        (GridRow(4, ((0, 0.5), (1, 0.625)), (), 0.5625, 0.1, False),), 2
    )
    text = runs_csv_text(report)
    lines = text.strip().split("\n")
    assert lines[0] == "length,run,val_acc"
    assert lines[1] == "4,0,0.5"
    assert lines[2] == "4,1,0.625"


def test_summary_csv_schema_and_nan_mean():
    report = GridSearchReport(
        (
            GridRow(0, ((0, 0.75),), (), 0.75, 0.0, True),
            GridRow(8, (), (0, 1), math.nan, 0.0, False),
        ),
        2,
    )
    lines = summary_csv_text(report).strip().split("\n")
    assert lines[0] == "length,mean,ci_half_width"
    assert lines[1] == "0,0.75,0.0"
    assert lines[2] == "8,,0.0"  # all-failed row keeps its place, empty mean
