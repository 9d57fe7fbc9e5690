from __future__ import annotations

import numpy as np
import pytest

from cutkit.datasets import Dataset
from cutkit.tensor import Image, LabeledSample


def img(values, shape=None) -> Image:
    """Image from nested lists or a flat list + shape."""
    arr = np.asarray(values, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(shape)
    return Image(arr)


def random_image(rng: np.random.Generator, c=3, h=8, w=8) -> Image:
    return Image(rng.random((c, h, w), dtype=np.float32))


def random_dataset(seed: int, n=12, c=3, h=8, w=8, classes=4, name="fixture") -> Dataset:
    rng = np.random.default_rng(seed)
    samples = tuple(
        LabeledSample(random_image(rng, c, h, w), int(rng.integers(classes))) for _ in range(n)
    )
    return Dataset(samples, classes, name)


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(1234)
