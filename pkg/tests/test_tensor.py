import itertools
from math import prod

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_matricize
from flextucker.errors import ModeOutOfRange, RankExceedsDim, ShapeMismatch
from flextucker.tensor import (
    DenseTensor,
    frobenius_norm,
    matricize,
    random_tensor,
    synth_lowrank,
    tensorize,
    track_allocations,
)

dims_strategy = st.lists(st.integers(1, 6), min_size=1, max_size=4).map(tuple)


def test_norm_examples():
    assert frobenius_norm(DenseTensor.full((2, 2, 2), 0.0)) == 0.0
    assert frobenius_norm(DenseTensor.full((2, 2, 2), 1.0)) == pytest.approx(np.sqrt(8), abs=1e-12)
    X = DenseTensor((2, 2, 2), np.arange(1, 9))
    assert frobenius_norm(X) == pytest.approx(14.2828568570, abs=1e-9)
    assert frobenius_norm(X) ** 2 == pytest.approx(204.0)


def test_invariants_rejected():
    with pytest.raises(ShapeMismatch):
        DenseTensor((2, 3), np.zeros(5))
    with pytest.raises(ShapeMismatch):
        DenseTensor((), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        DenseTensor((2, 0), np.zeros(0))


def test_column_major_layout():
    X = DenseTensor((2, 3, 4), np.arange(24.0))
    for i, j, k in itertools.product(range(2), range(3), range(4)):
        assert X[i, j, k] == i + 2 * j + 6 * k


def test_linear_index_bijection():
    dims = (3, 4, 5)
    hits = np.zeros(prod(dims), dtype=int)
    for idx in itertools.product(*(range(d) for d in dims)):
        hits[idx[0] + dims[0] * idx[1] + dims[0] * dims[1] * idx[2]] += 1
    assert np.all(hits == 1)


def test_tensor_is_immutable():
    X = DenseTensor((2, 2), [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValueError):
        X.data[0] = 5.0


def test_matricize_examples():
    M = DenseTensor((2, 2), [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(matricize(M, 0), [[1, 3], [2, 4]])
    np.testing.assert_array_equal(matricize(M, 1), [[1, 2], [3, 4]])
    X = DenseTensor((2, 2, 2), np.arange(1.0, 9.0))
    np.testing.assert_array_equal(matricize(X, 1), [[1, 2, 5, 6], [3, 4, 7, 8]])
    np.testing.assert_array_equal(matricize(X, 1), brute_matricize(X.to_array(), 1))


def test_matricize_bad_mode():
    X = DenseTensor((2, 2), np.zeros(4))
    with pytest.raises(ModeOutOfRange):
        matricize(X, 2)
    with pytest.raises(ModeOutOfRange):
        matricize(X, -1)


def test_tensorize_examples():
    M = np.array([[1.0, 2, 5, 6], [3, 4, 7, 8]])
    np.testing.assert_array_equal(tensorize(M, (2, 2, 2), 1).data, np.arange(1.0, 9.0))
    row = np.arange(5.0)[None, :]
    np.testing.assert_array_equal(tensorize(row, (1, 5), 0).data, np.arange(5.0))
    with pytest.raises(ShapeMismatch):
        tensorize(M, (2, 2, 3), 1)


@given(dims=dims_strategy, seed=st.integers(0, 2**16))
def test_matricize_matches_index_oracle(dims, seed):
    X = random_tensor(dims, seed, "normal")
    for n in range(len(dims)):
        np.testing.assert_array_equal(matricize(X, n), brute_matricize(X.to_array(), n))


def test_roundtrip_bit_exact_and_norm(rng):
    for _ in range(100):
        order = int(rng.integers(2, 5))
        dims = tuple(int(d) for d in rng.integers(1, 11, size=order))
        X = random_tensor(dims, int(rng.integers(2**31)), "normal")
        nrm = frobenius_norm(X)
        for n in range(order):
            M = matricize(X, n)
            assert np.array_equal(tensorize(M, dims, n).data, X.data)
            assert np.linalg.norm(M) == pytest.approx(nrm, rel=1e-13)


def test_random_tensor_determinism_and_range():
    a = random_tensor((3, 3), 42)
    b = random_tensor((3, 3), 42)
    assert np.array_equal(a.data, b.data)
    u = random_tensor((2, 2, 2), 7, "uniform")
    assert np.all((u.data >= 0) & (u.data < 1))
    with pytest.raises(ValueError):
        random_tensor((2,), 0, "cauchy")


def test_random_tensor_normal_moments():
    X = random_tensor((100, 100, 100), 3, "normal")
    assert abs(X.data.mean()) < 0.01
    assert abs(X.data.var() - 1.0) < 0.02


def _multilinear_rank(X, tol=1e-9):
    return tuple(
        int(np.sum(np.linalg.svd(matricize(X, n), compute_uv=False) > tol * frobenius_norm(X)))
        for n in range(X.order)
    )


def test_synth_lowrank_rank():
    X = synth_lowrank((12, 10, 8), (3, 4, 2), 1)
    assert X.dims == (12, 10, 8)
    assert _multilinear_rank(X) == (3, 4, 2)
    full = synth_lowrank((4, 5, 3), (4, 5, 3), 2)
    assert _multilinear_rank(full) == (4, 5, 3)
    with pytest.raises(RankExceedsDim):
        synth_lowrank((3, 3), (4, 1), 0)


def test_synth_rank_one_minors_vanish():
    X = synth_lowrank((4, 3, 5), (1, 1, 1), 9)
    for n in range(3):
        M = matricize(X, n)
        rows, cols = M.shape
        for i1, i2 in itertools.combinations(range(rows), 2):
            for j1, j2 in itertools.combinations(range(cols), 2):
                minor = M[i1, j1] * M[i2, j2] - M[i1, j2] * M[i2, j1]
                assert abs(minor) <= 1e-10


def test_allocation_tracker_records_matricize():
    X = random_tensor((4, 5, 6), 0)
    with track_allocations() as tr:
        M = matricize(X, 1)
    assert tr.sizes("matricize") == [X.size]
    assert tr.max_live_buffer() == X.size
    del M
    assert tr.live() == []
