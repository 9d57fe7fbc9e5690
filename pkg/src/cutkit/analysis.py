"""Activation-magnitude profiles of a trained SmallCnn.

A profile is the layer's absolute activations sorted in descending order,
per sample, then averaged position by position across samples. The two relu
layers are probed at their pooled block outputs (the values the next layer
consumes); "dense" is the logits. Comparing two models' profiles over the
head (largest magnitudes) and tail (smallest half) summarizes how the mass
of the activation distribution shifted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .augment import normalize
from .datasets import Dataset, DatasetStats
from .errors import EmptyDatasetError
from .smallnet import SmallCnn, forward
from .tensor import LabeledSample, batch_from_samples

PROFILE_LAYERS = ("relu1", "relu2", "dense")

HEAD_FRACTION = 0.10
TAIL_FRACTION = 0.50


@dataclass(frozen=True)
class ActivationProfile:
    """Sorted mean |activation| curve for one layer.

    `scope` records what was averaged: "sample:<i>" or "dataset:<name>".
    """

    layer: str
    values: np.ndarray  # float64, descending, >= 0
    scope: str

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 1 or v.size == 0:
            raise ValueError(f"profile must be a non-empty vector, got shape {v.shape}")
        if np.any(v < 0) or np.any(v[1:] > v[:-1]):
            raise ValueError("profile values must be non-negative and non-increasing")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def _sorted_abs(acts: np.ndarray) -> np.ndarray:
    """Per-sample |activations| in descending order, float64, (n, units)."""
    flat = np.abs(acts.reshape(acts.shape[0], -1)).astype(np.float64)
    flat.sort(axis=1)
    return flat[:, ::-1]


def profile_dataset(
    net: SmallCnn,
    ds: Dataset,
    layer: str,
    stats: DatasetStats | None = None,
    batch_size: int = 256,
) -> ActivationProfile:
    """Mean sorted-|activation| curve at `layer` over the whole dataset.

    Each sample is sorted before averaging, so the curve is a mean of
    order statistics, not the sorted mean activation.
    """
    if layer not in PROFILE_LAYERS:
        raise ValueError(f"unknown layer {layer!r}; expected one of {PROFILE_LAYERS}")
    n = len(ds.samples)
    if n == 0:
        raise EmptyDatasetError("cannot profile an empty dataset")
    total = None
    for start in range(0, n, batch_size):
        part = ds.samples[start : start + batch_size]
        if stats is not None:
            part = [LabeledSample(normalize(s.image, stats), s.label) for s in part]
        batch, _ = batch_from_samples(part)
        _, acts = forward(net, batch, train_mode=False)
        chunk = _sorted_abs(acts[layer]).sum(axis=0)
        total = chunk if total is None else total + chunk
    return ActivationProfile(layer, total / n, scope=f"dataset:{ds.name}")


def profile_sample(
    net: SmallCnn,
    sample: LabeledSample,
    layer: str,
    sample_id: int = 0,
    stats: DatasetStats | None = None,
) -> ActivationProfile:
    """Sorted-|activation| curve of a single sample."""
    if layer not in PROFILE_LAYERS:
        raise ValueError(f"unknown layer {layer!r}; expected one of {PROFILE_LAYERS}")
    if stats is not None:
        sample = LabeledSample(normalize(sample.image, stats), sample.label)
    batch, _ = batch_from_samples([sample])
    _, acts = forward(net, batch, train_mode=False)
    return ActivationProfile(layer, _sorted_abs(acts[layer])[0], scope=f"sample:{sample_id}")


def compare_profiles(a: ActivationProfile, b: ActivationProfile) -> dict:
    """Mass ratios of b over a in the head (top 10% of positions) and the
    tail (bottom 50%). A region where both masses are zero reports 1.0."""
    if len(a) != len(b):
        raise ValueError(f"profile lengths differ: {len(a)} vs {len(b)}")
    if a.layer != b.layer:
        raise ValueError(f"profiles are from different layers: {a.layer!r} vs {b.layer!r}")
    n = len(a)
    head = max(1, int(n * HEAD_FRACTION))
    tail = max(1, int(n * TAIL_FRACTION))

    def ratio(mass_a: float, mass_b: float) -> float:
        if mass_a == 0.0:
            return 1.0 if mass_b == 0.0 else float("inf")
        return mass_b / mass_a

    return {
        "layer": a.layer,
        "head_ratio": ratio(float(a.values[:head].sum()), float(b.values[:head].sum())),
        "tail_ratio": ratio(float(a.values[-tail:].sum()), float(b.values[-tail:].sum())),
    }


def profile_csv_text(profile: ActivationProfile) -> str:
    """CSV with 1-based rank and magnitude, descending."""
    lines = ["rank,magnitude\n"]
    for i, v in enumerate(profile.values, start=1):
        lines.append(f"{i},{float(v)!r}\n")
    return "".join(lines)


def write_profile_csv(path, profile: ActivationProfile) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(profile_csv_text(profile))


def comparison_json_text(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True) + "\n"
