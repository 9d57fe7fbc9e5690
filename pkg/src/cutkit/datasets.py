"""Dataset parsers, statistics, and splits.

Binary formats handled bit-exactly:

* CIFAR-10: records of 3073 bytes (1 label byte, then 1024 R + 1024 G +
  1024 B pixel bytes, row-major within each plane).
* CIFAR-100: records of 3074 bytes (coarse label, fine label, then pixels
  as CIFAR-10); the fine label is kept.
* STL-10: images of 27648 bytes (3 x 96 x 96, column-major within each
  channel, channels R,G,B) plus a separate label file of one byte per
  image with values 1-10.
* Raw container ("CUTRAW01"): the package's own format for synthetic and
  converted data, see `parse_raw`.

Pixel bytes are scaled to [0, 1] at parse time (value v becomes the float32
quotient v/255), so normalization afterwards operates in one unit system.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptRecordError,
    DegenerateChannelError,
    EmptyDatasetError,
    FormatError,
    PairingError,
    TruncatedFileError,
)
from .rng import RngStream
from .tensor import Image, LabeledSample, nearest_upsample

RAW_MAGIC = b"CUTRAW01"
_RAW_HEADER = struct.Struct("<5I")

_CIFAR10_RECORD = 3073
_CIFAR100_RECORD = 3074
_STL10_IMAGE_BYTES = 3 * 96 * 96


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of same-shape labeled samples."""

    samples: tuple[LabeledSample, ...]
    class_count: int
    name: str

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.samples:
            shape = self.samples[0].image.shape
            for i, s in enumerate(self.samples):
                if s.image.shape != shape:
                    raise ValueError(f"sample {i} has shape {s.image.shape}, expected {shape}")
                if s.label >= self.class_count:
                    raise ValueError(
                        f"sample {i} has label {s.label} >= class count {self.class_count}"
                    )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        if not self.samples:
            raise EmptyDatasetError("empty dataset has no image shape")
        return self.samples[0].image.shape


@dataclass(frozen=True)
class DatasetStats:
    """Per-channel mean and population standard deviation, in [0, 1] pixel units."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise ValueError("mean and std must have the same length")
        if np.any(std <= 0):
            raise ValueError("std must be > 0 per channel")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def channels(self) -> int:
        return self.mean.shape[0]


def _pixels_from_bytes(raw: np.ndarray) -> np.ndarray:
    """uint8 pixel array -> float32 in [0, 1]; the one byte->real mapping."""
    return raw.astype(np.float32) / 255.0


def _records(data: bytes, record_size: int, what: str) -> np.ndarray:
    n, rem = divmod(len(data), record_size)
    if rem != 0:
        raise TruncatedFileError(
            f"{what}: length {len(data)} is not a multiple of the {record_size}-byte record"
        )
    return np.frombuffer(data, dtype=np.uint8).reshape(n, record_size)


def parse_cifar10(data: bytes) -> Dataset:
    """Parse CIFAR-10 binary records into 3x32x32 samples with labels 0-9."""
    recs = _records(data, _CIFAR10_RECORD, "cifar10")
    labels = recs[:, 0]
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise CorruptRecordError(f"cifar10: record {bad[0]} has label byte {labels[bad[0]]} > 9")
    pixels = _pixels_from_bytes(recs[:, 1:].reshape(-1, 3, 32, 32))
    samples = [LabeledSample(Image(pixels[i]), int(labels[i])) for i in range(len(recs))]
    return Dataset(tuple(samples), 10, "cifar10")


def parse_cifar100(data: bytes) -> Dataset:
    """Parse CIFAR-100 binary records; the fine label byte is kept, coarse discarded."""
    recs = _records(data, _CIFAR100_RECORD, "cifar100")
    fine = recs[:, 1]
    bad = np.nonzero(fine > 99)[0]
    if bad.size:
        raise CorruptRecordError(f"cifar100: record {bad[0]} has fine label {fine[bad[0]]} > 99")
    pixels = _pixels_from_bytes(recs[:, 2:].reshape(-1, 3, 32, 32))
    samples = [LabeledSample(Image(pixels[i]), int(fine[i])) for i in range(len(recs))]
    return Dataset(tuple(samples), 100, "cifar100")


def parse_stl10(image_bytes: bytes, label_bytes: bytes) -> Dataset:
    """Parse STL-10 image and label streams into 3x96x96 samples with labels 0-9.

    Source pixels are column-major within each channel; they are transposed
    to this package's row-major layout.
    """
    recs = _records(image_bytes, _STL10_IMAGE_BYTES, "stl10")
    labels = np.frombuffer(label_bytes, dtype=np.uint8)
    if labels.shape[0] != recs.shape[0]:
        raise PairingError(
            f"stl10: {recs.shape[0]} images but {labels.shape[0]} labels"
        )
    bad = np.nonzero((labels < 1) | (labels > 10))[0]
    if bad.size:
        raise CorruptRecordError(
            f"stl10: record {bad[0]} has label byte {labels[bad[0]]}, expected 1-10"
        )
    # (n, c, x, y) column-major source -> swap the trailing axes for row-major
    planes = recs.reshape(-1, 3, 96, 96).transpose(0, 1, 3, 2)
    pixels = _pixels_from_bytes(np.ascontiguousarray(planes))
    samples = [LabeledSample(Image(pixels[i]), int(labels[i]) - 1) for i in range(len(recs))]
    return Dataset(tuple(samples), 10, "stl10")


def parse_raw(data: bytes) -> Dataset:
    """Parse the raw container: magic ``CUTRAW01``, five little-endian u32
    fields (n, c, h, w, class_count), then n records of one label byte
    followed by c*h*w planar row-major pixel bytes."""
    if len(data) < len(RAW_MAGIC) or data[: len(RAW_MAGIC)] != RAW_MAGIC:
        raise FormatError("raw: bad magic, expected CUTRAW01")
    header_end = len(RAW_MAGIC) + _RAW_HEADER.size
    if len(data) < header_end:
        raise TruncatedFileError("raw: header cut short")
    n, c, h, w, class_count = _RAW_HEADER.unpack(data[len(RAW_MAGIC) : header_end])
    if min(c, h, w) < 1:
        raise FormatError(f"raw: dimensions must be >= 1, got c={c} h={h} w={w}")
    record = 1 + c * h * w
    expected = header_end + n * record
    if len(data) < expected:
        raise TruncatedFileError(f"raw: header promises {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise FormatError(f"raw: {len(data) - expected} trailing bytes after payload")
    if n == 0:
        return Dataset((), class_count, "raw")
    recs = np.frombuffer(data, dtype=np.uint8, offset=header_end).reshape(n, record)
    labels = recs[:, 0]
    bad = np.nonzero(labels >= class_count)[0]
    if bad.size:
        raise CorruptRecordError(
            f"raw: record {bad[0]} has label {labels[bad[0]]} >= class count {class_count}"
        )
    pixels = _pixels_from_bytes(recs[:, 1:].reshape(n, c, h, w))
    samples = [LabeledSample(Image(pixels[i]), int(labels[i])) for i in range(n)]
    return Dataset(tuple(samples), class_count, "raw")


def write_raw(ds: Dataset) -> bytes:
    """Encode a dataset in the raw container format (inverse of `parse_raw`).

    Pixels are quantized to bytes with round-half-even of p*255; datasets that
    came from any parser in this module round-trip exactly.
    """
    if ds.class_count > 256:
        raise FormatError(f"raw container stores 1-byte labels; {ds.class_count} classes do not fit")
    if not ds.samples:
        return RAW_MAGIC + _RAW_HEADER.pack(0, 1, 1, 1, ds.class_count)
    c, h, w = ds.image_shape
    out = bytearray(RAW_MAGIC)
    out += _RAW_HEADER.pack(len(ds.samples), c, h, w, ds.class_count)
    for s in ds.samples:
        out.append(s.label)
        out += np.rint(np.clip(s.image.data, 0.0, 1.0) * 255.0).astype(np.uint8).tobytes()
    return bytes(out)


def compute_stats(ds: Dataset) -> DatasetStats:
    """Two-pass per-channel mean and population standard deviation (float64)."""
    if not ds.samples:
        raise EmptyDatasetError("cannot compute stats of an empty dataset")
    c, h, w = ds.image_shape
    per_image = h * w
    total = np.zeros(c, dtype=np.float64)
    for s in ds.samples:
        total += s.image.data.sum(axis=(1, 2), dtype=np.float64)
    mean = total / (per_image * len(ds.samples))
    sq = np.zeros(c, dtype=np.float64)
    centered_mean = mean[:, None, None]
    for s in ds.samples:
        sq += ((s.image.data.astype(np.float64) - centered_mean) ** 2).sum(axis=(1, 2))
    std = np.sqrt(sq / (per_image * len(ds.samples)))
    degenerate = np.nonzero(std < 1e-12)[0]
    if degenerate.size:
        raise DegenerateChannelError(f"channel {degenerate[0]} has zero variance")
    return DatasetStats(mean, std)


def split_train_val(ds: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled partition; validation gets round(n * val_fraction).

    Both parts keep the shuffled order produced by the seeded permutation
    (PCG64 over SeedSequence([seed])); together they are an exact partition
    of the input.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(ds.samples)
    perm = RngStream(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    train = Dataset(tuple(ds.samples[i] for i in train_idx), ds.class_count, ds.name + "/train")
    val = Dataset(tuple(ds.samples[i] for i in val_idx), ds.class_count, ds.name + "/val")
    return train, val


def make_occlusion_dataset(
    n: int,
    seed: int,
    classes: int = 10,
    channels: int = 3,
    size: int = 16,
    template_grid: int = 4,
    template_amp: float = 0.25,
    noise: float = 0.25,
    occluder: int = 5,
) -> Dataset:
    """Bundled synthetic occlusion dataset for desk-scale experiments.

    Each class is a smooth global template (a coarse random grid upsampled to
    the image size), every sample adds per-pixel Gaussian noise, and a square
    occluder of side `occluder` is pasted at a random position with fill 0,
    so recognizing a class requires spatially distributed evidence. Labels
    cycle round-robin. Pixels are quantized to the byte grid, so the dataset
    survives a raw-container round trip bit-exactly.

    Draw order (one stream seeded from [seed]): all class templates first,
    then per sample the noise field followed by the occluder position.
    """
    if n < 0 or classes < 1 or channels < 1 or size < 1:
        raise ValueError("n, classes, channels, size must be positive")
    if occluder < 0 or occluder > size:
        raise ValueError(f"occluder side must be in [0, {size}], got {occluder}")
    rng = RngStream(seed)
    templates = np.empty((classes, channels, size, size), dtype=np.float64)
    for k in range(classes):
        coarse = rng.normal((channels, template_grid, template_grid))
        for ch in range(channels):
            templates[k, ch] = nearest_upsample(coarse[ch], size, size)
    samples = []
    for i in range(n):
        label = i % classes
        raw = 0.5 + template_amp * templates[label] + noise * rng.normal((channels, size, size))
        if occluder > 0:
            oy = rng.integers(size - occluder + 1)
            ox = rng.integers(size - occluder + 1)
            raw[:, oy : oy + occluder, ox : ox + occluder] = 0.0
        quantized = np.rint(np.clip(raw, 0.0, 1.0) * 255.0).astype(np.uint8)
        samples.append(LabeledSample(Image(_pixels_from_bytes(quantized)), label))
    return Dataset(tuple(samples), classes, "occlusion-synth")
