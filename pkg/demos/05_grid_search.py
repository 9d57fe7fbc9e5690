"""Sweep cutout patch lengths and pick the best by validation accuracy.

Run: python3 demos/05_grid_search.py
Scaled down (tiny net, few epochs, 3 runs per length) so it finishes fast;
the selection logic is the same at any scale.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cutkit.datasets import compute_stats, make_occlusion_dataset
from cutkit.gridsearch import run_grid, select_length, summary_csv_text
from cutkit.pipeline import NormalizeStage, TransformChain
from cutkit.smallnet import ArchDescriptor, TrainConfig

ds = make_occlusion_dataset(500, seed=21, noise=0.6)
stats = compute_stats(ds)
base = TransformChain((NormalizeStage(stats),))
arch = ArchDescriptor(3, 16, 16, 10, conv_channels=(8, 16), dropout_p=0.2)
cfg = TrainConfig(epochs=8, batch_size=64, lr0=0.02, milestones=(6,), seed=2024)

lengths = [0, 4, 8, 12]
print(f"lengths {lengths}, 3 runs each, {cfg.epochs} epochs per run")
report = run_grid(ds, lengths, runs_per_length=3, base_chain=base, cfg=cfg, arch=arch)

print()
print(summary_csv_text(report), end="")
print()
for row in report.rows:
    bar = "#" * int(row.mean * 40)
    print(f"L={row.length:>2}  mean={row.mean:.4f} +-{row.ci_half_width:.4f}  {bar}")

print(f"\nselected length: {select_length(report)} (highest mean, ties to the smaller length)")
