"""A small from-scratch CNN, its optimizer, and the training loop.

The network is deliberately desk-scale: conv3x3-relu-pool, conv3x3-relu-pool,
dropout, dense. It exists to demonstrate the direction of augmentation
effects and to supply activations for profile analysis, not to chase
benchmark accuracy. Everything is plain numpy; convolutions go through an
im2col layout so the heavy lifting lands in BLAS matmuls.

Numeric conventions:
  - parameters and activations live in the net's dtype (float32 by default,
    float64 for finite-difference checking);
  - loss reductions accumulate in float64;
  - relu's derivative at exactly 0 is taken as 0;
  - maxpool backward routes gradient to the first maximum in row-major
    window order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .augment import normalize
from .datasets import Dataset, DatasetStats
from .errors import (
    DivergenceError,
    EmptyDatasetError,
    FormatError,
    NumericError,
    ShapeError,
    TruncatedFileError,
)
from .pipeline import LoaderConfig, TransformChain, chain_stats, epoch_batches
from .rng import RngStream
from .tensor import LabeledSample, Tensor4, batch_from_samples

LAYER_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense_w", "dense_b")

CHECKPOINT_MAGIC = b"CUTNET01"


@dataclass(frozen=True)
class ArchDescriptor:
    """Shape-level description of a SmallCnn."""

    in_channels: int
    in_h: int
    in_w: int
    class_count: int
    conv_channels: tuple[int, int] = (32, 64)
    dropout_p: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")
        # two 2x2 pools; multiples of 4 keep the pooling exact
        if self.in_h < 4 or self.in_h % 4 or self.in_w < 4 or self.in_w % 4:
            raise ValueError(f"input sides must be multiples of 4, got {self.in_h}x{self.in_w}")
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if len(self.conv_channels) != 2 or min(self.conv_channels) < 1:
            raise ValueError(f"conv_channels must be two positive counts, got {self.conv_channels}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def feature_count(self) -> int:
        return self.conv_channels[1] * (self.in_h // 4) * (self.in_w // 4)

    def param_shapes(self) -> dict:
        c1, c2 = self.conv_channels
        return {
            "conv1_w": (c1, self.in_channels, 3, 3),
            "conv1_b": (c1,),
            "conv2_w": (c2, c1, 3, 3),
            "conv2_b": (c2,),
            "dense_w": (self.class_count, self.feature_count),
            "dense_b": (self.class_count,),
        }


class SmallCnn:
    """conv(Cin->c1)-relu-pool-conv(c1->c2)-relu-pool-dropout(p)-dense."""

    def __init__(self, arch: ArchDescriptor, params: dict):
        expected = arch.param_shapes()
        if set(params) != set(LAYER_ORDER):
            raise ValueError(f"params must have exactly keys {LAYER_ORDER}")
        for k in LAYER_ORDER:
            if tuple(params[k].shape) != expected[k]:
                raise ShapeError(f"{k}: expected shape {expected[k]}, got {params[k].shape}")
            if not np.all(np.isfinite(params[k])):
                raise ValueError(f"{k} contains non-finite values")
        self.arch = arch
        self.params = params

    @property
    def dtype(self):
        return self.params["conv1_w"].dtype

    @classmethod
    def init(cls, arch: ArchDescriptor, seed: int, dtype=np.float32) -> "SmallCnn":
        """Kaiming fan-in gaussian weights, zero biases.

        Draw order is pinned: conv1_w, conv2_w, dense_w.
        """
        rng = RngStream.for_init(seed)
        shapes = arch.param_shapes()

        def weight(name: str, fan_in: int) -> np.ndarray:
            return rng.normal(shapes[name], math.sqrt(2.0 / fan_in)).astype(dtype)

        params = {"conv1_w": weight("conv1_w", arch.in_channels * 9)}
        params["conv1_b"] = np.zeros(shapes["conv1_b"], dtype=dtype)
        params["conv2_w"] = weight("conv2_w", arch.conv_channels[0] * 9)
        params["conv2_b"] = np.zeros(shapes["conv2_b"], dtype=dtype)
        params["dense_w"] = weight("dense_w", arch.feature_count)
        params["dense_b"] = np.zeros(shapes["dense_b"], dtype=dtype)
        return cls(arch, params)

    def astype(self, dtype) -> "SmallCnn":
        return SmallCnn(self.arch, {k: v.astype(dtype) for k, v in self.params.items()})


# ---------------------------------------------------------------- layers

def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded stride-1 3x3 convolution; returns (out, im2col matrix)."""
    n, c, h, wd = x.shape
    k = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 3, 3, h, wd), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, :, dy, dx] = xp[:, :, dy : dy + h, dx : dx + wd]
    colsm = cols.reshape(n, c * 9, h * wd)
    out = np.matmul(w.reshape(k, c * 9), colsm) + b.reshape(1, k, 1)
    return out.reshape(n, k, h, wd), colsm


def conv3x3_backward(dout: np.ndarray, colsm: np.ndarray, w: np.ndarray, in_shape):
    n, c, h, wd = in_shape
    k = w.shape[0]
    doutm = dout.reshape(n, k, h * wd)
    dw = np.matmul(doutm, colsm.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.matmul(w.reshape(k, c * 9).T, doutm).reshape(n, c, 3, 3, h, wd)
    dxp = np.zeros((n, c, h + 2, wd + 2), dtype=dout.dtype)
    for dy in range(3):
        for dx in range(3):
            dxp[:, :, dy : dy + h, dx : dx + wd] += dcols[:, :, dy, dx]
    return dxp[:, :, 1 : 1 + h, 1 : 1 + wd], dw, db


def maxpool2x2_forward(x: np.ndarray):
    """2x2 stride-2 max pooling; returns (out, argmax over each window)."""
    n, c, h, w = x.shape
    win = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    arg = win.argmax(axis=-1)  # first max wins ties (row-major window order)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2x2_backward(dout: np.ndarray, arg: np.ndarray, in_shape):
    n, c, h, w = in_shape
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    return dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy under a numerically shifted softmax.

    Returns (loss, dloss/dlogits); the gradient carries the 1/n of the mean.
    """
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    denom = expz.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    idx = np.arange(n)
    logp = z[idx, labels] - np.log(denom[:, 0])
    loss = float(-logp.mean(dtype=np.float64))
    dlogits = expz / denom
    dlogits[idx, labels] -= 1.0
    dlogits /= n
    return loss, dlogits


# ---------------------------------------------------------------- forward

_STAGE_SEQ = ("conv1", "relu1", "pool1", "conv2", "relu2", "pool2", "dropout", "dense")


def _forward_cached(
    net: SmallCnn,
    batch: Tensor4,
    train_mode: bool,
    rng: RngStream | None,
    dropout_mask: np.ndarray | None,
):
    arch = net.arch
    if (batch.c, batch.h, batch.w) != (arch.in_channels, arch.in_h, arch.in_w):
        raise ShapeError(
            f"batch is {batch.c}x{batch.h}x{batch.w}, "
            f"net expects {arch.in_channels}x{arch.in_h}x{arch.in_w}"
        )
    p = net.params
    x = batch.data.astype(net.dtype, copy=False)

    a1, cols1 = conv3x3_forward(x, p["conv1_w"], p["conv1_b"])
    r1 = np.maximum(a1, 0)
    p1, arg1 = maxpool2x2_forward(r1)
    a2, cols2 = conv3x3_forward(p1, p["conv2_w"], p["conv2_b"])
    r2 = np.maximum(a2, 0)
    p2, arg2 = maxpool2x2_forward(r2)

    drop_p = arch.dropout_p
    if train_mode and drop_p > 0.0:
        if dropout_mask is None:
            if rng is None:
                raise ValueError("train-mode dropout requires an rng or an explicit mask")
            dropout_mask = rng.random_array(p2.shape) >= drop_p
        mask = dropout_mask.astype(net.dtype, copy=False)
        d = p2 * mask * net.dtype.type(1.0 / (1.0 - drop_p))
    else:
        mask = None
        d = p2

    feat = d.reshape(batch.n, -1)
    logits = feat @ p["dense_w"].T + p["dense_b"]

    # snapshots are the block outputs: each conv-relu-pool block emits its
    # pooled map (pooling forwards relu values unchanged, subsampled)
    acts = {"relu1": p1, "relu2": p2, "dense": logits}
    cache = {
        "x_shape": x.shape,
        "cols1": cols1,
        "a1": a1,
        "p1_shape": p1.shape,
        "arg1": arg1,
        "cols2": cols2,
        "a2": a2,
        "arg2": arg2,
        "p2_shape": p2.shape,
        "mask": mask,
        "feat": feat,
        "stages": {"conv1": a1, "relu1": r1, "conv2": a2, "relu2": r2, "dropout": d, "dense": logits},
    }
    return logits, acts, cache


def forward(
    net: SmallCnn,
    batch: Tensor4,
    train_mode: bool = False,
    rng: RngStream | None = None,
    dropout_mask: np.ndarray | None = None,
):
    """Run the net; returns (logits, {"relu1", "relu2", "dense"} activations).

    The "relu1"/"relu2" snapshots are the pooled outputs of their
    conv-relu-pool blocks (what the next layer consumes); "dense" is the
    logits. Dropout is active only in train_mode and uses inverted scaling,
    so evaluation needs no rescale. The mask comes from `rng` (one uniform
    draw of the pooled feature shape) unless an explicit mask is supplied.
    """
    logits, acts, _ = _forward_cached(net, batch, train_mode, rng, dropout_mask)
    return logits, acts


def _first_nonfinite_stage(cache: dict) -> str:
    for name in _STAGE_SEQ:
        arr = cache["stages"].get(name)
        if arr is not None and not np.all(np.isfinite(arr)):
            return name
    return "loss"


def _backward(net: SmallCnn, cache: dict, dlogits: np.ndarray) -> dict:
    p = net.params
    arch = net.arch
    grads = {}
    grads["dense_w"] = dlogits.T @ cache["feat"]
    grads["dense_b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ p["dense_w"]

    dd = dfeat.reshape(cache["p2_shape"])
    if cache["mask"] is not None:
        dd = dd * cache["mask"] * net.dtype.type(1.0 / (1.0 - arch.dropout_p))
    dr2 = maxpool2x2_backward(dd, cache["arg2"], cache["a2"].shape)
    da2 = dr2 * (cache["a2"] > 0)
    dp1, grads["conv2_w"], grads["conv2_b"] = conv3x3_backward(
        da2, cache["cols2"], p["conv2_w"], cache["p1_shape"]
    )
    dr1 = maxpool2x2_backward(dp1, cache["arg1"], cache["a1"].shape)
    da1 = dr1 * (cache["a1"] > 0)
    _, grads["conv1_w"], grads["conv1_b"] = conv3x3_backward(
        da1, cache["cols1"], p["conv1_w"], cache["x_shape"]
    )
    return grads


_WEIGHT_KEYS = ("conv1_w", "conv2_w", "dense_w")


def _loss_grads_logits(
    net: SmallCnn,
    batch: Tensor4,
    labels: np.ndarray,
    weight_decay: float,
    train_mode: bool = False,
    rng: RngStream | None = None,
    dropout_mask: np.ndarray | None = None,
):
    logits, _, cache = _forward_cached(net, batch, train_mode, rng, dropout_mask)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    if weight_decay:
        reg = sum(float((net.params[k].astype(np.float64) ** 2).sum()) for k in _WEIGHT_KEYS)
        loss += 0.5 * weight_decay * reg
    if not math.isfinite(loss):
        stage = _first_nonfinite_stage(cache)
        raise NumericError(f"non-finite values first appear at layer '{stage}'")
    grads = _backward(net, cache, dlogits)
    if weight_decay:
        for k in _WEIGHT_KEYS:
            grads[k] = grads[k] + net.dtype.type(weight_decay) * net.params[k]
    return loss, grads, logits


def loss_and_grads(
    net: SmallCnn,
    batch: Tensor4,
    labels: np.ndarray,
    weight_decay: float = 0.0,
    train_mode: bool = False,
    rng: RngStream | None = None,
    dropout_mask: np.ndarray | None = None,
):
    """Mean cross-entropy plus (weight_decay/2)*sum of squared weights
    (biases excluded), with backprop gradients for every parameter."""
    loss, grads, _ = _loss_grads_logits(
        net, batch, labels, weight_decay, train_mode, rng, dropout_mask
    )
    return loss, grads


# ---------------------------------------------------------------- optimizer

@dataclass
class OptimizerState:
    velocity: dict

    @classmethod
    def for_net(cls, net: SmallCnn) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in net.params.items()})


def sgd_nesterov_step(params: dict, grads: dict, state: OptimizerState, lr: float, momentum: float):
    """v <- mu*v + g; w <- w - lr*(g + mu*v). Reduces to plain SGD at mu=0."""
    for k in params:
        v = state.velocity[k]
        v *= momentum
        v += grads[k]
        params[k] -= lr * (grads[k] + momentum * v)


def sgd_momentum_step(params: dict, grads: dict, state: OptimizerState, lr: float, momentum: float):
    """Classical momentum: v <- mu*v + g; w <- w - lr*v."""
    for k in params:
        v = state.velocity[k]
        v *= momentum
        v += grads[k]
        params[k] -= lr * v


# ---------------------------------------------------------------- schedule

@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr0: float
    milestones: tuple[int, ...] = ()
    factor: float = 5.0
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 < 0:
            raise ValueError(f"lr0 must be >= 0, got {self.lr0}")
        if self.factor <= 1:
            raise ValueError(f"factor must be > 1, got {self.factor}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {self.milestones}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """lr0 / factor^(number of milestones <= epoch); epochs are 0-based."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    drops = sum(1 for m in cfg.milestones if m <= epoch)
    return cfg.lr0 / cfg.factor**drops


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class EpochRow:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    eval_acc: float  # nan when no eval dataset was given


@dataclass(frozen=True)
class TrainReport:
    rows: tuple[EpochRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    @property
    def final_eval_acc(self) -> float:
        return self.rows[-1].eval_acc

    def to_csv_text(self) -> str:
        return report_header_line() + "".join(report_row_line(r) for r in self.rows)


def report_header_line() -> str:
    return "epoch,lr,train_loss,train_acc,eval_acc\n"


def report_row_line(row: EpochRow) -> str:
    eval_field = "" if math.isnan(row.eval_acc) else repr(row.eval_acc)
    return f"{row.epoch},{row.lr!r},{row.train_loss!r},{row.train_acc!r},{eval_field}\n"


def train(
    net: SmallCnn,
    train_ds: Dataset,
    chain: TransformChain,
    cfg: TrainConfig,
    eval_ds: Dataset | None = None,
    workers: int = 1,
    queue_capacity: int = 4,
    on_epoch: Callable[[EpochRow], None] | None = None,
) -> TrainReport:
    """Train in place; returns the per-epoch history.

    Deterministic given cfg.seed (single-threaded math): the loader derives
    all shuffling/augmentation from it and batch dropout masks come from
    (seed, epoch, batch_index). Evaluation applies only the chain's
    normalization. Raises DivergenceError (with .epoch) on a non-finite loss.
    """
    if len(train_ds.samples) == 0:
        raise EmptyDatasetError("training dataset is empty")
    out_shape = chain.output_shape(train_ds.image_shape)
    arch = net.arch
    if out_shape != (arch.in_channels, arch.in_h, arch.in_w):
        raise ShapeError(f"chain emits {out_shape}, net expects "
                         f"({arch.in_channels}, {arch.in_h}, {arch.in_w})")

    loader = LoaderConfig(
        batch_size=cfg.batch_size,
        shuffle_seed=cfg.seed,
        worker_count=workers,
        queue_capacity=queue_capacity,
    )
    state = OptimizerState.for_net(net)
    step = sgd_nesterov_step if cfg.nesterov else sgd_momentum_step
    eval_stats = chain_stats(chain)
    rows = []
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        loss_sum = 0.0
        correct = 0
        seen = 0
        for batch_index, (batch, labels) in enumerate(epoch_batches(train_ds, chain, loader, epoch)):
            rng = RngStream.for_dropout(cfg.seed, epoch, batch_index)
            try:
                loss, grads, logits = _loss_grads_logits(
                    net, batch, labels, cfg.weight_decay, train_mode=True, rng=rng
                )
            except NumericError as e:
                raise DivergenceError(epoch, f"epoch {epoch}: {e}") from e
            step(net.params, grads, state, lr, cfg.momentum)
            loss_sum += loss * batch.n
            correct += int((logits.argmax(axis=1) == labels).sum())
            seen += batch.n
        eval_acc = (
            evaluate(net, eval_ds, cfg.batch_size, eval_stats) if eval_ds is not None else math.nan
        )
        row = EpochRow(epoch, lr, loss_sum / seen, correct / seen, eval_acc)
        rows.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return TrainReport(tuple(rows))


def evaluate(
    net: SmallCnn, ds: Dataset, batch_size: int = 256, stats: DatasetStats | None = None
) -> float:
    """Fraction of samples whose argmax logit equals the label.

    Dropout inactive; the only preparation applied is normalization when
    `stats` is given. Batch size cannot change the result.
    """
    n = len(ds.samples)
    if n == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    correct = 0
    for start in range(0, n, batch_size):
        part = ds.samples[start : start + batch_size]
        if stats is not None:
            part = [LabeledSample(normalize(s.image, stats), s.label) for s in part]
        batch, labels = batch_from_samples(part)
        logits, _ = forward(net, batch, train_mode=False)
        correct += int((logits.argmax(axis=1) == labels).sum())
    return correct / n


# ---------------------------------------------------------------- checkpoints

def checkpoint_bytes(net: SmallCnn) -> bytes:
    """Magic, u32-length JSON architecture blob, then float32 little-endian
    parameter tensors in layer order."""
    arch = net.arch
    blob = json.dumps(
        {
            "class_count": arch.class_count,
            "conv_channels": list(arch.conv_channels),
            "dropout_p": arch.dropout_p,
            "in_channels": arch.in_channels,
            "in_h": arch.in_h,
            "in_w": arch.in_w,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("ascii")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(blob)), blob]
    for k in LAYER_ORDER:
        parts.append(np.ascontiguousarray(net.params[k], dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path, net: SmallCnn) -> None:
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(net))


def load_checkpoint(path) -> SmallCnn:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(CHECKPOINT_MAGIC) + 4:
        raise TruncatedFileError(f"checkpoint is {len(data)} bytes, too short for a header")
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError("bad magic: not a checkpoint file")
    (blob_len,) = struct.unpack_from("<I", data, len(CHECKPOINT_MAGIC))
    off = len(CHECKPOINT_MAGIC) + 4
    if len(data) < off + blob_len:
        raise TruncatedFileError("checkpoint ends inside the architecture blob")
    try:
        fields = json.loads(data[off : off + blob_len].decode("ascii"))
        arch = ArchDescriptor(
            in_channels=fields["in_channels"],
            in_h=fields["in_h"],
            in_w=fields["in_w"],
            class_count=fields["class_count"],
            conv_channels=tuple(fields["conv_channels"]),
            dropout_p=fields["dropout_p"],
        )
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"bad architecture blob: {e}") from e
    off += blob_len
    params = {}
    for k, shape in arch.param_shapes().items():
        count = int(np.prod(shape))
        nbytes = count * 4
        if len(data) < off + nbytes:
            raise TruncatedFileError(f"checkpoint ends inside tensor '{k}'")
        params[k] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=off)
            .reshape(shape)
            .astype(np.float32)
        )
        off += nbytes
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes after the last tensor")
    return SmallCnn(arch, params)
