"""Dense image and batch containers.

Pixel data is single precision, channel-major (planar), row-major within each
channel: flat index ``c*H*W + y*W + x``. CIFAR's binary files are stored the
same way, so parsing is a reinterpretation plus scaling. Values are immutable
after construction and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatchError, ShapeError


def _as_readonly_f32(data: np.ndarray, ndim: int, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != ndim:
        raise ShapeError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if any(s < 1 for s in arr.shape):
        raise ShapeError(f"{what} dimensions must be >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Image:
    """A (channels, height, width) float32 pixel tensor."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_readonly_f32(self.data, 3, "image"))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class LabeledSample:
    """An image paired with a 0-based class index."""

    image: Image
    label: int

    def __post_init__(self):
        if self.label < 0:
            raise ValueError(f"label must be >= 0, got {self.label}")


@dataclass(frozen=True)
class Tensor4:
    """A (n, c, h, w) float32 batch; flat index ((n*C + c)*H + h)*W + w."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_readonly_f32(self.data, 4, "batch"))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def sample(self, i: int) -> Image:
        """Image view of sample i (bit-identical to the stacked input)."""
        return Image(self.data[i])


def image_get(img: Image, c: int, y: int, x: int) -> float:
    """Pixel at (c, y, x); raises IndexError outside the image."""
    if not (0 <= c < img.channels and 0 <= y < img.height and 0 <= x < img.width):
        raise IndexError(f"index (c={c}, y={y}, x={x}) out of range for shape {img.shape}")
    return float(img.data[c, y, x])


def batch_from_samples(samples: list[LabeledSample]) -> tuple[Tensor4, np.ndarray]:
    """Stack samples (order preserved) into a Tensor4 plus an int64 label vector."""
    if not samples:
        raise EmptyBatchError("cannot build a batch from zero samples")
    shape = samples[0].image.shape
    for i, s in enumerate(samples):
        if s.image.shape != shape:
            raise ShapeError(f"sample {i} has shape {s.image.shape}, expected {shape}")
    data = np.stack([s.image.data for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return Tensor4(data), labels


def nearest_upsample(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor upsample of a 2D map: out[y, x] = grid[y*h//out_h, x*w//out_w]."""
    if grid.ndim != 2 or grid.size == 0:
        raise ShapeError(f"expected a non-empty 2D map, got shape {grid.shape}")
    h, w = grid.shape
    if out_h < h or out_w < w:
        raise ShapeError(f"cannot upsample {grid.shape} to smaller ({out_h}, {out_w})")
    iy = (np.arange(out_h) * h) // out_h
    ix = (np.arange(out_w) * w) // out_w
    return grid[np.ix_(iy, ix)]
