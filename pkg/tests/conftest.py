import itertools

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_matricize(arr: np.ndarray, n: int) -> np.ndarray:
    """Index-by-index unfolding; lower remaining modes vary fastest along columns."""
    dims = arr.shape
    rest = [m for m in range(len(dims)) if m != n]
    J = int(np.prod([dims[m] for m in rest]))
    out = np.zeros((dims[n], J))
    for idx in itertools.product(*(range(d) for d in dims)):
        col, stride = 0, 1
        for m in rest:
            col += idx[m] * stride
            stride *= dims[m]
        out[idx[n], col] = arr[idx]
    return out


def explicit_ttm(X, U, n):
    """Matricize -> GEMM -> tensorize reference path."""
    from flextucker.tensor import matricize, tensorize

    dims = X.dims[:n] + (U.shape[0],) + X.dims[n + 1:]
    return tensorize(U @ matricize(X, n), dims, n)


def naive_gemm(A, B):
    m, k = A.shape
    n = B.shape[1]
    C = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += A[i, p] * B[p, j]
            C[i, j] = s
    return C


def random_dims(rng, order_range=(2, 4), max_dim=9):
    order = int(rng.integers(order_range[0], order_range[1] + 1))
    return tuple(int(d) for d in rng.integers(1, max_dim + 1, size=order))
