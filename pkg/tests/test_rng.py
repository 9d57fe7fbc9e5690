from __future__ import annotations

import numpy as np
import pytest

from cutkit.rng import RngStream, derive_seed


def test_same_parts_same_sequence():
    a = RngStream(7, 2, 5)
    b = RngStream(7, 2, 5)
    assert [a.integers(1000) for _ in range(20)] == [b.integers(1000) for _ in range(20)]


def test_pinned_draws():
    # golden against numpy PCG64(SeedSequence((7, 2, 5))); portable across platforms
    s = RngStream(7, 2, 5)
    assert [s.integers(100) for _ in range(4)] == [66, 60, 59, 54]
    assert RngStream(7, 2, 5).random() == pytest.approx(0.6002748007110185, abs=0.0)


def test_different_parts_different_sequence():
    seen = set()
    for parts in [(0,), (1,), (0, 1), (0, 0, 1), (2, 3), (3, 2)]:
        seen.add(tuple(RngStream(*parts).integers(1 << 30) for _ in range(4)))
    assert len(seen) == 6


def test_trailing_zero_parts_collide():
    # SeedSequence drops trailing zero entropy words; pinned so a "fix" that
    # silently changes every downstream golden gets caught here first
    a = [RngStream(5).integers(1 << 30) for _ in range(4)]
    b = [RngStream(5, 0).integers(1 << 30) for _ in range(4)]
    c = [RngStream(5, 0, 0).integers(1 << 30) for _ in range(4)]
    assert a == b == c


def test_negative_part_rejected():
    with pytest.raises(ValueError):
        RngStream(3, -1)


def test_factory_methods_match_tuple_construction():
    assert RngStream.for_sample(9, 4, 17).integers(1 << 30) == RngStream(9, 4, 17).integers(1 << 30)
    assert RngStream.for_shuffle(9, 4).integers(1 << 30) == RngStream(9, 4).integers(1 << 30)
    assert RngStream.for_init(9).integers(1 << 30) == RngStream(9).integers(1 << 30)
    assert RngStream.for_dropout(9, 4, 17).integers(1 << 30) == RngStream(9, 4, 17, 1).integers(1 << 30)


def test_dropout_stream_disjoint_from_sample_stream():
    # tag 1 keeps (seed, epoch, batch) dropout streams off (seed, epoch, index) sample streams
    a = RngStream.for_dropout(9, 4, 17)
    b = RngStream.for_sample(9, 4, 17)
    assert [a.integers(1 << 30) for _ in range(4)] != [b.integers(1 << 30) for _ in range(4)]


def test_integers_range():
    s = RngStream(11)
    draws = [s.integers(7) for _ in range(500)]
    assert min(draws) >= 0 and max(draws) <= 6
    assert set(draws) == set(range(7))


def test_random_range():
    s = RngStream(12)
    draws = [s.random() for _ in range(500)]
    assert all(0.0 <= d < 1.0 for d in draws)


def test_random_array_shape_and_dtype():
    arr = RngStream(13).random_array((3, 4, 5))
    assert arr.shape == (3, 4, 5)
    assert arr.dtype == np.float64
    assert arr.min() >= 0.0 and arr.max() < 1.0


def test_normal_scale():
    arr = RngStream(14).normal((200, 200), scale=0.05)
    assert abs(arr.mean()) < 0.001
    assert abs(arr.std() - 0.05) < 0.001


def test_permutation_contents_and_dtype():
    perm = RngStream(3).permutation(6)
    assert perm.dtype == np.int64
    assert sorted(perm.tolist()) == list(range(6))
    assert perm.tolist() == [2, 5, 4, 1, 3, 0]


def test_permutation_deterministic():
    assert RngStream(21, 3).permutation(50).tolist() == RngStream(21, 3).permutation(50).tolist()


def test_derive_seed_pinned_and_stable():
    assert derive_seed(500, 0) == 128483101
    assert derive_seed(500, 0, 1) == 3522256487
    assert derive_seed(500, 0) == derive_seed(500, 0)


def test_derive_seed_distinct_across_parts():
    seeds = {derive_seed(500, r) for r in range(50)}
    assert len(seeds) == 50


def test_derive_seed_fits_32_bits():
    for r in range(20):
        s = derive_seed(123, r)
        assert 0 <= s < 2**32
