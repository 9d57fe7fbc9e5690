from __future__ import annotations

import json

import numpy as np
import pytest

from cutkit.analysis import (
    ActivationProfile,
    compare_profiles,
    comparison_json_text,
    profile_csv_text,
    profile_dataset,
    profile_sample,
    write_profile_csv,
)
from cutkit.datasets import Dataset
from cutkit.errors import EmptyDatasetError
from cutkit.smallnet import ArchDescriptor, SmallCnn
from cutkit.tensor import Image, LabeledSample

from conftest import random_dataset

ARCH = ArchDescriptor(1, 8, 8, 3, conv_channels=(2, 4), dropout_p=0.0)


def net_for(seed=0):
    return SmallCnn.init(ARCH, seed)


def zero_net():
    params = {k: np.zeros(s, dtype=np.float32) for k, s in ARCH.param_shapes().items()}
    return SmallCnn(ARCH, params)


# ------------------------------------------------------------- profile type

def test_profile_validates_monotone():
    with pytest.raises(ValueError):
        ActivationProfile("relu1", np.array([1.0, 2.0]), "sample:0")
    with pytest.raises(ValueError):
        ActivationProfile("relu1", np.array([1.0, -0.5]), "sample:0")
    with pytest.raises(ValueError):
        ActivationProfile("relu1", np.array([]), "sample:0")
    p = ActivationProfile("relu1", np.array([2.0, 1.0, 1.0, 0.0]), "sample:0")
    assert len(p) == 4
    assert p.values.dtype == np.float64
    assert not p.values.flags.writeable


# ------------------------------------------------------------- oracles

def test_sort_then_average_hand_example():
    # samples with activations [1,3] and [3,1] -> per-sample sort gives [3,1]
    # twice -> mean profile [3,1], not the sorted mean [2,2]
    from cutkit.analysis import _sorted_abs

    acts = np.array([[1.0, 3.0], [3.0, 1.0]])
    sorted_rows = _sorted_abs(acts)
    assert sorted_rows.tolist() == [[3.0, 1.0], [3.0, 1.0]]
    assert sorted_rows.mean(axis=0).tolist() == [3.0, 1.0]


def test_zero_weight_net_gives_zero_profile():
    ds = random_dataset(0, n=5, c=1, h=8, w=8, classes=3)
    prof = profile_dataset(zero_net(), ds, "relu2")
    assert not prof.values.any()
    assert len(prof) == 4 * 2 * 2  # c2 x (h/4) x (w/4), pooled block output


def test_profile_lengths_match_unit_counts():
    # each relu layer is profiled at its pooled block output
    ds = random_dataset(1, n=3, c=1, h=8, w=8, classes=3)
    net = net_for()
    assert len(profile_dataset(net, ds, "relu1")) == 2 * 4 * 4
    assert len(profile_dataset(net, ds, "relu2")) == 4 * 2 * 2
    assert len(profile_dataset(net, ds, "dense")) == 3


def test_singleton_dataset_equals_profile_sample():
    ds = random_dataset(2, n=1, c=1, h=8, w=8, classes=3)
    net = net_for(3)
    a = profile_dataset(net, ds, "relu2")
    b = profile_sample(net, ds.samples[0], "relu2")
    assert np.array_equal(a.values, b.values)
    assert a.scope.startswith("dataset:") and b.scope.startswith("sample:")


def test_profile_dataset_matches_scalar_mean_of_sorted():
    ds = random_dataset(4, n=6, c=1, h=8, w=8, classes=3)
    net = net_for(5)
    prof = profile_dataset(net, ds, "relu1")
    singles = [profile_sample(net, s, "relu1").values for s in ds.samples]
    assert np.allclose(prof.values, np.mean(singles, axis=0), atol=1e-12)


def test_profile_batch_size_invariance():
    ds = random_dataset(6, n=7, c=1, h=8, w=8, classes=3)
    net = net_for(7)
    a = profile_dataset(net, ds, "relu2", batch_size=2)
    b = profile_dataset(net, ds, "relu2", batch_size=256)
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_profile_uses_absolute_dense_values():
    ds = random_dataset(8, n=4, c=1, h=8, w=8, classes=3)
    net = net_for(9)
    prof = profile_dataset(net, ds, "dense")
    assert np.all(prof.values >= 0)


def test_duplicate_samples_profile_equals_single():
    base = random_dataset(10, n=1, c=1, h=8, w=8, classes=3)
    trip = Dataset(base.samples * 3, 3, "trip")
    net = net_for(11)
    a = profile_dataset(net, base, "relu1")
    b = profile_dataset(net, trip, "relu1")
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_profile_rejects_unknown_layer_and_empty_ds():
    ds = random_dataset(12, n=2, c=1, h=8, w=8, classes=3)
    with pytest.raises(ValueError):
        profile_dataset(net_for(), ds, "conv9")
    with pytest.raises(EmptyDatasetError):
        profile_dataset(net_for(), Dataset((), 3, "none"), "relu1")


# ------------------------------------------------------------- comparisons

def test_compare_identical_profiles():
    p = ActivationProfile("relu2", np.array([3.0, 2.0, 1.0, 0.5]), "s")
    out = compare_profiles(p, p)
    assert out == {"layer": "relu2", "head_ratio": 1.0, "tail_ratio": 1.0}


def test_compare_doubled_profile():
    v = np.linspace(10, 0.1, 20)
    a = ActivationProfile("relu1", v, "a")
    b = ActivationProfile("relu1", 2 * v, "b")
    out = compare_profiles(a, b)
    assert out["head_ratio"] == pytest.approx(2.0)
    assert out["tail_ratio"] == pytest.approx(2.0)


def test_compare_regions_are_head_and_tail():
    # 10 positions: head = first 1, tail = last 5
    a = ActivationProfile("relu1", np.array([4.0] + [1.0] * 9), "a")
    vb = np.array([8.0, 1.0, 1.0, 1.0, 1.0, 3.0, 0.5, 0.5, 0.5, 0.5])
    vb = np.sort(vb)[::-1]  # [8,3,1,1,1,1,.5,.5,.5,.5]
    b = ActivationProfile("relu1", vb, "b")
    out = compare_profiles(a, b)
    assert out["head_ratio"] == pytest.approx(8.0 / 4.0)
    assert out["tail_ratio"] == pytest.approx((1.0 + 4 * 0.5) / 5.0)


def test_compare_zero_regions():
    a = ActivationProfile("relu1", np.array([1.0, 0.0]), "a")
    b = ActivationProfile("relu1", np.array([2.0, 0.0]), "b")
    out = compare_profiles(a, b)
    assert out["tail_ratio"] == 1.0  # both tails empty
    c = ActivationProfile("relu1", np.array([2.0, 0.5]), "c")
    assert compare_profiles(a, c)["tail_ratio"] == float("inf")


def test_compare_rejects_mismatch():
    a = ActivationProfile("relu1", np.array([1.0]), "a")
    b = ActivationProfile("relu1", np.array([1.0, 0.5]), "b")
    with pytest.raises(ValueError):
        compare_profiles(a, b)
    c = ActivationProfile("relu2", np.array([1.0]), "c")
    with pytest.raises(ValueError):
        compare_profiles(a, c)


# ------------------------------------------------------------- artifacts

def test_profile_csv_schema(tmp_path):
    p = ActivationProfile("relu1", np.array([1.5, 0.25, 0.0]), "s")
    text = profile_csv_text(p)
    lines = text.strip().split("\n")
    assert lines[0] == "rank,magnitude"
    assert lines[1] == "1,1.5"
    assert lines[3] == "3,0.0"
    mags = [float(l.split(",")[1]) for l in lines[1:]]
    assert mags == sorted(mags, reverse=True)
    path = tmp_path / "p.csv"
    write_profile_csv(path, p)
    assert path.read_text(encoding="utf-8") == text


def test_comparison_json_schema():
    out = comparison_json_text({"layer": "relu2", "tail_ratio": 1.5, "head_ratio": 0.5})
    assert out.endswith("\n")
    parsed = json.loads(out)
    assert set(parsed) == {"layer", "tail_ratio", "head_ratio"}


# ------------------------------------------------------------- invariance

def test_profile_permutation_invariance():
    # shuffling channels of the dense weight permutes logits but not their profile
    ds = random_dataset(14, n=3, c=1, h=8, w=8, classes=3)
    net = net_for(15)
    base = profile_dataset(net, ds, "dense")
    perm = np.array([2, 0, 1])
    shuffled = SmallCnn(
        ARCH,
        {
            **{k: v.copy() for k, v in net.params.items()},
            "dense_w": net.params["dense_w"][perm].copy(),
            "dense_b": net.params["dense_b"][perm].copy(),
        },
    )
    out = profile_dataset(shuffled, ds, "dense")
    assert np.allclose(base.values, out.values, atol=1e-12)
