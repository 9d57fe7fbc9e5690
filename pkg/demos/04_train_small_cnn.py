"""Train the small CNN for a few epochs and watch the report.

Run: python3 demos/04_train_small_cnn.py [--epochs N]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cutkit.augment import CutoutParams
from cutkit.datasets import compute_stats, make_occlusion_dataset, split_train_val
from cutkit.pipeline import CutoutStage, NormalizeStage, TransformChain
from cutkit.rng import derive_seed
from cutkit.smallnet import (
    ArchDescriptor,
    SmallCnn,
    TrainConfig,
    evaluate,
    report_header_line,
    report_row_line,
    save_checkpoint,
    train,
)

parser = argparse.ArgumentParser()
parser.add_argument("--epochs", type=int, default=6)
args = parser.parse_args()

ds = make_occlusion_dataset(600, seed=77)
train_ds, val_ds = split_train_val(ds, 0.2, derive_seed(77, 0))
stats = compute_stats(train_ds)
chain = TransformChain((
    NormalizeStage(stats),
    CutoutStage(CutoutParams(6, "always_clipped")),
))

arch = ArchDescriptor(3, 16, 16, 10, conv_channels=(8, 16), dropout_p=0.3)
cfg = TrainConfig(
    epochs=args.epochs,
    batch_size=64,
    lr0=0.02,
    milestones=(args.epochs - 2,),
    factor=5.0,
    weight_decay=0.0,
    seed=123,
)

net = SmallCnn.init(arch, cfg.seed)
print(report_header_line(), end="")
report = train(net, train_ds, chain, cfg, eval_ds=val_ds,
               on_epoch=lambda row: print(report_row_line(row), end=""))

print(f"final val accuracy: {evaluate(net, val_ds, stats=stats):.4f}")

here = os.path.dirname(os.path.abspath(__file__))
ckpt = os.path.join(here, "demo_net.cutnet")
save_checkpoint(ckpt, net)
print(f"checkpoint written to {ckpt} ({os.path.getsize(ckpt)} bytes)")
