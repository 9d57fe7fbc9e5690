"""Image transforms: normalization, padding, cropping, mirroring, and the
square occlusion-mask (cutout) operators.

All transforms are pure: they never modify their input and draw every random
decision from an explicit `RngStream`, so different samples can be processed
concurrently with independently derived streams. Draw order is part of each
operator's contract (documented per function) because golden tests replay it.

Masked pixels are set to exactly 0.0. The intended call order is to normalize
first, so that 0 equals the per-channel dataset mean in normalized space;
surviving pixels are never rescaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import DatasetStats
from .errors import ShapeError
from .rng import RngStream
from .tensor import Image, nearest_upsample

CUTOUT_MODES = ("always_clipped", "constrained_p50")


@dataclass(frozen=True)
class CutoutParams:
    """Square-patch configuration.

    length: side of the square patch in pixels (>= 0).
    mode: "always_clipped" centers the patch on a uniformly random pixel and
        clips it at the borders; "constrained_p50" keeps the whole patch
        inside the image but applies it only with probability 0.5.
    """

    length: int
    mode: str = "always_clipped"

    def __post_init__(self):
        if self.length < 0:
            raise ValueError(f"patch length must be >= 0, got {self.length}")
        if self.mode not in CUTOUT_MODES:
            raise ValueError(f"mode must be one of {CUTOUT_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class MaskRect:
    """Half-open pixel bounds of a mask, already clipped to the image."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise ValueError(f"invalid rect ({self.x0},{self.y0})..({self.x1},{self.y1})")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height


def normalize(img: Image, stats: DatasetStats) -> Image:
    """Per-channel (x - mean) / std; arithmetic in float64, stored float32."""
    if stats.channels != img.channels:
        raise ShapeError(f"stats cover {stats.channels} channels, image has {img.channels}")
    out = (img.data.astype(np.float64) - stats.mean[:, None, None]) / stats.std[:, None, None]
    return Image(out.astype(np.float32))


def denormalize(img: Image, stats: DatasetStats) -> Image:
    """Inverse of `normalize`: x * std + mean."""
    if stats.channels != img.channels:
        raise ShapeError(f"stats cover {stats.channels} channels, image has {img.channels}")
    out = img.data.astype(np.float64) * stats.std[:, None, None] + stats.mean[:, None, None]
    return Image(out.astype(np.float32))


def zero_pad(img: Image, pad: int) -> Image:
    """Zero border of `pad` pixels on each side; interior equals the input."""
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    if pad == 0:
        return img
    return Image(np.pad(img.data, ((0, 0), (pad, pad), (pad, pad))))


def crop(img: Image, oy: int, ox: int, out_h: int, out_w: int) -> Image:
    """Window [oy, oy+out_h) x [ox, ox+out_w) of the image."""
    if out_h > img.height or out_w > img.width or out_h < 1 or out_w < 1:
        raise ShapeError(
            f"crop {out_h}x{out_w} does not fit image {img.height}x{img.width}"
        )
    if not (0 <= oy <= img.height - out_h and 0 <= ox <= img.width - out_w):
        raise ValueError(f"crop offset ({oy}, {ox}) out of range")
    return Image(img.data[:, oy : oy + out_h, ox : ox + out_w])


def random_crop(img: Image, out_h: int, out_w: int, rng: RngStream) -> Image:
    """Crop at an offset drawn uniformly; draws oy then ox (always, even when
    the crop is full-size and the only possible offset is 0)."""
    if out_h > img.height or out_w > img.width or out_h < 1 or out_w < 1:
        raise ShapeError(
            f"crop {out_h}x{out_w} does not fit image {img.height}x{img.width}"
        )
    oy = rng.integers(img.height - out_h + 1)
    ox = rng.integers(img.width - out_w + 1)
    return crop(img, oy, ox, out_h, out_w)


def hflip(img: Image) -> Image:
    """Mirror horizontally: out[c, y, x] = in[c, y, W-1-x]."""
    return Image(img.data[:, :, ::-1])


def random_hflip(img: Image, rng: RngStream) -> Image:
    """Mirror with probability 0.5; flips iff the drawn uniform is < 0.5."""
    return hflip(img) if rng.random() < 0.5 else img


def cutout_mask_rect(h: int, w: int, length: int, cx: int, cy: int) -> MaskRect:
    """Clipped bounds of a square patch of side `length` centered at (cx, cy).

    The unclipped patch spans [cy - length//2, cy - length//2 + length) x
    [cx - length//2, cx - length//2 + length); the returned rect is its
    intersection with the h x w image.
    """
    if not (0 <= cx < w and 0 <= cy < h):
        raise ValueError(f"center ({cx}, {cy}) outside {w}x{h} image")
    if length < 0:
        raise ValueError(f"patch length must be >= 0, got {length}")
    y0 = cy - length // 2
    x0 = cx - length // 2
    return MaskRect(
        x0=max(0, x0),
        y0=max(0, y0),
        x1=min(w, x0 + length),
        y1=min(h, y0 + length),
    )


def cutout_at(img: Image, length: int, cy: int, cx: int) -> tuple[Image, MaskRect]:
    """Zero the clipped square patch centered at (cx, cy); returns the rect too.

    Pixels inside the rect become exactly 0.0 in every channel; pixels outside
    are bit-identical to the input.
    """
    rect = cutout_mask_rect(img.height, img.width, length, cx, cy)
    if rect.area == 0:
        return img, rect
    out = img.data.copy()
    out[:, rect.y0 : rect.y1, rect.x0 : rect.x1] = 0.0
    return Image(out), rect


def apply_cutout(img: Image, params: CutoutParams, rng: RngStream) -> Image:
    """Apply one square zero-mask according to `params`.

    always_clipped: the center is drawn uniformly over all H x W pixel
    coordinates (cy then cx) and the patch is clipped at the borders, so part
    of it may fall outside the image.

    constrained_p50: one uniform decides application (applied iff < 0.5);
    when applied, the patch's top-left corner is drawn uniformly (oy then ox)
    over the positions that keep the whole patch inside the image.
    """
    h, w = img.height, img.width
    if params.mode == "always_clipped":
        cy = rng.integers(h)
        cx = rng.integers(w)
        out, _ = cutout_at(img, params.length, cy, cx)
        return out
    length = params.length
    if length > min(h, w):
        raise ValueError(
            f"constrained patch of side {length} cannot fit a {h}x{w} image"
        )
    if rng.random() >= 0.5:
        return img
    oy = rng.integers(h - length + 1)
    ox = rng.integers(w - length + 1)
    if length == 0:
        return img
    out = img.data.copy()
    out[:, oy : oy + length, ox : ox + length] = 0.0
    return Image(out)


def targeted_cutout(img: Image, feature_map: np.ndarray, rng: RngStream | None = None) -> Image:
    """Mask where an upsampled feature map exceeds its own mean.

    The single-channel map is upsampled to the image resolution by nearest
    neighbor; pixels whose upsampled value is strictly greater than the mean
    of the upsampled map are zeroed in all channels. Constant maps therefore
    produce no mask. Deterministic; `rng` is accepted for stage-signature
    uniformity and never drawn from.
    """
    fm = np.asarray(feature_map, dtype=np.float32)
    if fm.ndim == 3 and fm.shape[0] == 1:
        fm = fm[0]
    if fm.ndim != 2 or fm.size == 0:
        raise ShapeError(f"feature map must be a non-empty 2D array, got shape {fm.shape}")
    if not np.all(np.isfinite(fm)):
        raise ValueError("feature map contains non-finite values")
    if fm.shape[0] > img.height or fm.shape[1] > img.width:
        raise ShapeError(
            f"feature map {fm.shape} larger than image {img.height}x{img.width}"
        )
    up = nearest_upsample(fm, img.height, img.width).astype(np.float64)
    mask = up > up.mean()
    if not mask.any():
        return img
    out = img.data.copy()
    out[:, mask] = 0.0
    return Image(out)
