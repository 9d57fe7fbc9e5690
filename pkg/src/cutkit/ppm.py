"""Binary PPM (P6) dump of images for visual inspection.

Input images are expected in raw display space: values in [0, 1]. Each pixel
is encoded as round(clamp(p, 0, 1) * 255) with round-half-even. Normalized
images must be passed through `augment.denormalize` first.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .tensor import Image


def encode_ppm(img: Image) -> bytes:
    """P6 bytes for a 3-channel image; 1-channel images are replicated to gray RGB."""
    if img.channels == 1:
        planes = np.repeat(img.data, 3, axis=0)
    elif img.channels == 3:
        planes = img.data
    else:
        raise ValueError(f"PPM supports 1 or 3 channels, got {img.channels}")
    payload = np.rint(np.clip(planes, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + payload.transpose(1, 2, 0).tobytes()


def write_ppm(path: str | Path, img: Image) -> None:
    Path(path).write_bytes(encode_ppm(img))
