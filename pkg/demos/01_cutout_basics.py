"""Show what the two cutout modes actually do to an image.

Run: python3 demos/01_cutout_basics.py
Writes before/after PPM pairs next to this script.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cutkit.augment import CutoutParams, apply_cutout, cutout_at, cutout_mask_rect
from cutkit.ppm import write_ppm
from cutkit.rng import RngStream
from cutkit.tensor import Image

H, W, L = 16, 16, 8

# a smooth ramp so the hole is easy to see
ramp = np.linspace(0.2, 1.0, H * W, dtype=np.float32).reshape(1, H, W)
img = Image(np.concatenate([ramp, ramp[:, ::-1], ramp], axis=0))

print(f"image {H}x{W}, patch length {L}")

# mode 1: center anywhere, patch clipped at the borders
rect = cutout_mask_rect(H, W, L, cx=0, cy=0)
print(f"center (0,0) clips to rows {rect.y0}:{rect.y1} cols {rect.x0}:{rect.x1} "
      f"-> {rect.area} of {L * L} pixels masked")

out = apply_cutout(img, CutoutParams(L, "always_clipped"), RngStream(7, 0, 0))
masked = int((out.data[0] == 0).sum())
print(f"always_clipped with stream (7,0,0): {masked} pixels zeroed")

# mode 2: patch kept inside, applied on a coin flip
hits = 0
for i in range(1000):
    out2 = apply_cutout(img, CutoutParams(L, "constrained_p50"), RngStream(7, 0, i))
    hits += not np.array_equal(out2.data, img.data)
print(f"constrained_p50 applied in {hits}/1000 draws (expect ~500)")

# deterministic placement for the picture pair
shown, _ = cutout_at(img, L, cy=4, cx=11)
here = os.path.dirname(os.path.abspath(__file__))
write_ppm(os.path.join(here, "cutout_before.ppm"), img)
write_ppm(os.path.join(here, "cutout_after.ppm"), shown)
print("wrote cutout_before.ppm / cutout_after.ppm")
