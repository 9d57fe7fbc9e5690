"""Compare sorted activation-magnitude profiles of two trained nets.

Run: python3 demos/06_activation_profiles.py
Trains a baseline and a cutout net briefly, then prints their mean
sorted-|activation| curves at each probed layer plus head/tail mass ratios
(cutout over baseline).
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cutkit.analysis import PROFILE_LAYERS, compare_profiles, profile_dataset
from cutkit.augment import CutoutParams
from cutkit.datasets import compute_stats, make_occlusion_dataset, split_train_val
from cutkit.pipeline import CutoutStage, NormalizeStage, TransformChain
from cutkit.rng import derive_seed
from cutkit.smallnet import ArchDescriptor, SmallCnn, TrainConfig, evaluate, train

ds = make_occlusion_dataset(800, seed=55, noise=0.7)
train_ds, val_ds = split_train_val(ds, 0.2, derive_seed(55, 0))
stats = compute_stats(train_ds)

arch = ArchDescriptor(3, 16, 16, 10, conv_channels=(8, 16), dropout_p=0.2)
cfg = TrainConfig(epochs=10, batch_size=64, lr0=0.02, milestones=(8,), seed=31)

nets = {}
for name, stages in [
    ("baseline", (NormalizeStage(stats),)),
    ("cutout", (NormalizeStage(stats), CutoutStage(CutoutParams(8, "always_clipped")))),
]:
    net = SmallCnn.init(arch, cfg.seed)
    train(net, train_ds, TransformChain(stages), cfg)
    nets[name] = net
    print(f"{name}: val acc {evaluate(net, val_ds, stats=stats):.4f}")

for layer in PROFILE_LAYERS:
    a = profile_dataset(nets["baseline"], val_ds, layer, stats=stats)
    b = profile_dataset(nets["cutout"], val_ds, layer, stats=stats)
    summary = compare_profiles(a, b)
    print(f"\nlayer {layer} ({len(a)} units)")
    for name, prof in [("baseline", a), ("cutout", b)]:
        # ten evenly spaced points along the descending curve
        idx = [i * len(prof) // 10 for i in range(10)]
        pts = " ".join(f"{prof.values[i]:6.3f}" for i in idx)
        print(f"  {name:<8} {pts}")
    print(f"  head ratio {summary['head_ratio']:.3f}, tail ratio {summary['tail_ratio']:.3f}")
