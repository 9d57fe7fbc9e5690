"""cutkit: cutout-style image augmentation, bit-exact dataset parsing, a
deterministic parallel loader, a from-scratch CNN trainer, and activation
analysis, all in plain numpy."""

from .augment import (
    CUTOUT_MODES,
    CutoutParams,
    MaskRect,
    apply_cutout,
    cutout_at,
    cutout_mask_rect,
    denormalize,
    hflip,
    normalize,
    random_crop,
    random_hflip,
    targeted_cutout,
    zero_pad,
)
from .datasets import (
    Dataset,
    DatasetStats,
    compute_stats,
    make_occlusion_dataset,
    parse_cifar10,
    parse_cifar100,
    parse_raw,
    parse_stl10,
    split_train_val,
    write_raw,
)
from .pipeline import (
    CropStage,
    CutoutStage,
    HflipStage,
    LoaderConfig,
    NormalizeStage,
    PadStage,
    TargetedCutoutStage,
    TransformChain,
    apply_chain,
    epoch_batches,
    epoch_permutation,
    throughput_probe,
)
from .rng import RngStream, derive_seed
from .smallnet import (
    ArchDescriptor,
    SmallCnn,
    TrainConfig,
    TrainReport,
    evaluate,
    load_checkpoint,
    lr_at_epoch,
    save_checkpoint,
    train,
)
from .tensor import Image, LabeledSample, Tensor4, batch_from_samples

__version__ = "0.1.0"

__all__ = [
    "ArchDescriptor",
    "CUTOUT_MODES",
    "CropStage",
    "CutoutParams",
    "CutoutStage",
    "Dataset",
    "DatasetStats",
    "HflipStage",
    "Image",
    "LabeledSample",
    "LoaderConfig",
    "MaskRect",
    "NormalizeStage",
    "PadStage",
    "RngStream",
    "SmallCnn",
    "TargetedCutoutStage",
    "Tensor4",
    "TrainConfig",
    "TrainReport",
    "TransformChain",
    "apply_chain",
    "apply_cutout",
    "batch_from_samples",
    "compute_stats",
    "cutout_at",
    "cutout_mask_rect",
    "denormalize",
    "derive_seed",
    "epoch_batches",
    "epoch_permutation",
    "evaluate",
    "hflip",
    "load_checkpoint",
    "lr_at_epoch",
    "make_occlusion_dataset",
    "normalize",
    "parse_cifar10",
    "parse_cifar100",
    "parse_raw",
    "parse_stl10",
    "random_crop",
    "random_hflip",
    "save_checkpoint",
    "split_train_val",
    "targeted_cutout",
    "throughput_probe",
    "train",
    "write_raw",
    "zero_pad",
]
