"""Composable transform chains and a deterministic, parallel batch loader.

Determinism is defined at the sample level: every random decision for sample
``i`` in epoch ``e`` comes from the stream derived from
``(global_seed, e, i)``, and the epoch's visiting order from
``(shuffle_seed, e)``. The emitted batch sequence is therefore bit-identical
for any worker count; parallelism only changes wall-clock time.

The parallel path uses a fork()ed process pool with batch-granularity tasks
and keeps at most ``queue_capacity`` prepared batches in flight; the consumer
driving the generator provides backpressure. Where fork is unavailable the
loader runs in-process with identical output.
"""

from __future__ import annotations

import multiprocessing
import time
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Union

import numpy as np

from .augment import (
    CutoutParams,
    apply_cutout,
    normalize,
    random_crop,
    random_hflip,
    targeted_cutout,
    zero_pad,
)
from .datasets import Dataset, DatasetStats
from .errors import ChainError, EmptyDatasetError, ShapeError
from .rng import RngStream
from .tensor import Image, LabeledSample, Tensor4, batch_from_samples


@dataclass(frozen=True)
class NormalizeStage:
    stats: DatasetStats


@dataclass(frozen=True)
class PadStage:
    pad: int


@dataclass(frozen=True)
class CropStage:
    out_h: int
    out_w: int


@dataclass(frozen=True)
class HflipStage:
    pass


@dataclass(frozen=True)
class CutoutStage:
    params: CutoutParams


@dataclass(frozen=True)
class TargetedCutoutStage:
    """Masks by a per-sample feature map; `feature_map_for` maps a dataset
    sample index to its single-channel map."""

    feature_map_for: Callable[[int], np.ndarray]


Stage = Union[NormalizeStage, PadStage, CropStage, HflipStage, CutoutStage, TargetedCutoutStage]


def stage_name(stage: Stage) -> str:
    return {
        NormalizeStage: "normalize",
        PadStage: "pad",
        CropStage: "crop",
        HflipStage: "hflip",
        CutoutStage: "cutout",
        TargetedCutoutStage: "targeted_cutout",
    }[type(stage)]


@dataclass(frozen=True)
class TransformChain:
    """An ordered pipeline of transform descriptors."""

    stages: tuple[Stage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def output_shape(self, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        """Shape after all stages; raises ChainError naming the offending stage."""
        c, h, w = in_shape
        for pos, stage in enumerate(self.stages):
            where = f"stage {pos} ({stage_name(stage)})"
            if isinstance(stage, NormalizeStage):
                if stage.stats.channels != c:
                    raise ChainError(
                        f"{where}: stats cover {stage.stats.channels} channels, image has {c}"
                    )
            elif isinstance(stage, PadStage):
                if stage.pad < 0:
                    raise ChainError(f"{where}: pad must be >= 0")
                h, w = h + 2 * stage.pad, w + 2 * stage.pad
            elif isinstance(stage, CropStage):
                if stage.out_h > h or stage.out_w > w or min(stage.out_h, stage.out_w) < 1:
                    raise ChainError(
                        f"{where}: crop {stage.out_h}x{stage.out_w} does not fit {h}x{w}"
                    )
                h, w = stage.out_h, stage.out_w
            elif isinstance(stage, CutoutStage):
                p = stage.params
                if p.mode == "constrained_p50" and p.length > min(h, w):
                    raise ChainError(
                        f"{where}: constrained patch of side {p.length} cannot fit {h}x{w}"
                    )
        return c, h, w

    def eval_stages(self) -> "TransformChain":
        """The normalize-only subchain, used for evaluation-time preparation."""
        return TransformChain(tuple(s for s in self.stages if isinstance(s, NormalizeStage)))


def chain_stats(chain: TransformChain) -> DatasetStats | None:
    """Stats of the chain's first normalize stage, if it has one."""
    for stage in chain.stages:
        if isinstance(stage, NormalizeStage):
            return stage.stats
    return None


def _apply_stage(stage: Stage, img: Image, rng: RngStream, sample_index: int) -> Image:
    if isinstance(stage, NormalizeStage):
        return normalize(img, stage.stats)
    if isinstance(stage, PadStage):
        return zero_pad(img, stage.pad)
    if isinstance(stage, CropStage):
        return random_crop(img, stage.out_h, stage.out_w, rng)
    if isinstance(stage, HflipStage):
        return random_hflip(img, rng)
    if isinstance(stage, CutoutStage):
        return apply_cutout(img, stage.params, rng)
    if isinstance(stage, TargetedCutoutStage):
        return targeted_cutout(img, stage.feature_map_for(sample_index), rng)
    raise TypeError(f"unknown stage type {type(stage).__name__}")


def apply_chain(
    sample: LabeledSample,
    chain: TransformChain,
    epoch: int,
    index: int,
    global_seed: int,
) -> LabeledSample:
    """Run all stages in order on one sample; the label passes through.

    All randomness comes from the stream derived from
    (global_seed, epoch, index), with stages drawing in chain order.
    """
    rng = RngStream.for_sample(global_seed, epoch, index)
    img = sample.image
    for pos, stage in enumerate(chain.stages):
        try:
            img = _apply_stage(stage, img, rng, index)
        except (ShapeError, ValueError) as e:
            raise ChainError(f"stage {pos} ({stage_name(stage)}): {e}") from e
    return LabeledSample(img, sample.label)


@dataclass(frozen=True)
class LoaderConfig:
    """Batch loader settings. `shuffle_seed` is the loader's global seed: it
    drives both the epoch permutation and the per-sample transform streams."""

    batch_size: int
    shuffle_seed: int
    worker_count: int = 1
    queue_capacity: int = 4
    drop_last: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.queue_capacity < 1:
            raise ValueError(f"queue_capacity must be >= 1, got {self.queue_capacity}")


def epoch_permutation(shuffle_seed: int, epoch: int, n: int) -> np.ndarray:
    """The epoch's deterministic visiting order (a permutation of range(n))."""
    return RngStream.for_shuffle(shuffle_seed, epoch).permutation(n)


def _transform_batch(
    ds: Dataset, chain: TransformChain, epoch: int, seed: int, indices: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    samples = [apply_chain(ds.samples[i], chain, epoch, int(i), seed) for i in indices]
    batch, labels = batch_from_samples(samples)
    return batch.data, labels


# Snapshot inherited by fork()ed pool workers; one parallel epoch at a time.
_FORK_SNAPSHOT: tuple | None = None


def _pool_task(indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ds, chain, epoch, seed = _FORK_SNAPSHOT
    return _transform_batch(ds, chain, epoch, seed, indices)


def _fork_available() -> bool:
    return "fork" in multiprocessing.get_all_start_methods()


def epoch_batches(
    ds: Dataset,
    chain: TransformChain,
    cfg: LoaderConfig,
    epoch: int,
    instrumentation: dict | None = None,
) -> Iterator[tuple[Tensor4, np.ndarray]]:
    """Yield the epoch's transformed batches in deterministic order.

    The sequence is bit-identical for every worker_count because the shuffle
    and every sample's randomness are derived from (seed, epoch[, index]),
    never from scheduling. When `instrumentation` is given, its
    "max_in_flight" entry records the high-water mark of prepared batches.
    """
    n = len(ds.samples)
    if n == 0:
        raise EmptyDatasetError("cannot load batches from an empty dataset")
    perm = epoch_permutation(cfg.shuffle_seed, epoch, n)
    if cfg.drop_last:
        full = (n // cfg.batch_size) * cfg.batch_size
        perm = perm[:full]
    chunks = [perm[i : i + cfg.batch_size] for i in range(0, len(perm), cfg.batch_size)]

    global _FORK_SNAPSHOT
    parallel = cfg.worker_count > 1 and _fork_available() and _FORK_SNAPSHOT is None
    if not parallel:
        if instrumentation is not None:
            instrumentation["max_in_flight"] = 1 if chunks else 0
            instrumentation["workers_used"] = 1
        for indices in chunks:
            data, labels = _transform_batch(ds, chain, epoch, cfg.shuffle_seed, indices)
            yield Tensor4(data), labels
        return

    _FORK_SNAPSHOT = (ds, chain, epoch, cfg.shuffle_seed)
    ctx = multiprocessing.get_context("fork")
    pool = ctx.Pool(processes=cfg.worker_count)
    max_in_flight = 0
    if instrumentation is not None:
        instrumentation["workers_used"] = cfg.worker_count
    try:
        pending: deque = deque()
        for indices in chunks:
            if len(pending) >= cfg.queue_capacity:
                data, labels = pending.popleft().get()
                yield Tensor4(data), labels
            pending.append(pool.apply_async(_pool_task, (indices,)))
            max_in_flight = max(max_in_flight, len(pending))
            if instrumentation is not None:
                instrumentation["max_in_flight"] = max_in_flight
        while pending:
            data, labels = pending.popleft().get()
            yield Tensor4(data), labels
    finally:
        pool.terminate()
        pool.join()
        _FORK_SNAPSHOT = None


def throughput_probe(ds: Dataset, chain: TransformChain, cfg: LoaderConfig) -> dict:
    """Wall-clock samples/second over one epoch at 1 worker and at the
    configured worker count; speedup is their ratio."""

    def rate(workers: int) -> float:
        run_cfg = replace(cfg, worker_count=workers)
        start = time.perf_counter()
        seen = 0
        for batch, _labels in epoch_batches(ds, chain, run_cfg, epoch=0):
            seen += batch.n
        return seen / (time.perf_counter() - start)

    single = rate(1)
    multi = rate(cfg.worker_count) if cfg.worker_count > 1 else single
    return {
        "workers": cfg.worker_count,
        "samples_per_sec": multi,
        "speedup": multi / single,
        "samples_per_sec_1worker": single,
    }
