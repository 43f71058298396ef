"""Matricization-free TTM, TTT and Gram kernels.

Every kernel splits the loops of a column-major tensor around mode ``n``::

    inner = prod(dims[:n])   # contiguous, fastest varying
    axis  = dims[n]
    outer = prod(dims[n+1:])

so the flat buffer is an ``(inner, axis, outer)`` Fortran array and each
``outer`` slab is a contiguous ``inner x axis`` matrix. Mode 0 has
``inner == 1`` and the last mode has ``outer == 1``; both collapse to a single
GEMM on a reinterpreted buffer. Intermediate modes issue one GEMM per slab.
No kernel ever builds the unfolded ``I_n x J_n`` matrix.
"""
from __future__ import annotations

from math import prod
from typing import NamedTuple

import numpy as np

from . import linalg
from .errors import ShapeMismatch
from .tensor import DenseTensor, allocate, check_mode

__all__ = ["LoopSplit", "loop_split", "ttm", "ttt_mode", "gram"]

# batched path for intermediate-mode TTM
BATCH_MIN_SLABS = 4
BATCH_MAX_SLAB = 2**16


class LoopSplit(NamedTuple):
    inner: int
    axis: int
    outer: int


def loop_split(dims, n: int) -> LoopSplit:
    return LoopSplit(prod(dims[:n]), dims[n], prod(dims[n + 1:]))


def _regime(order: int, n: int) -> str:
    if n == 0:
        return "first"
    if n == order - 1:
        return "last"
    return "middle"


def ttm(X: DenseTensor, U, n: int) -> DenseTensor:
    """Mode-``n`` product ``X x_n U`` with ``U`` of shape ``R x I_n``.

    Returns a tensor whose ``n``-th dimension is ``R``.
    """
    n = check_mode(n, X.order)
    U = np.asarray(U, dtype=np.float64)
    P, I, O = loop_split(X.dims, n)
    if U.ndim != 2 or U.shape[1] != I:
        raise ShapeMismatch(f"matrix of shape {U.shape} cannot act on mode {n} of size {I}")
    R = U.shape[0]
    dims = X.dims[:n] + (R,) + X.dims[n + 1:]
    out = allocate(P * R * O, "ttm")

    regime = _regime(X.order, n)
    if regime == "first":
        linalg.gemm(U, X.data.reshape((I, O), order="F"), out=out.reshape((R, O), order="F"))
    elif regime == "last":
        linalg.gemm(X.data.reshape((P, I), order="F"), U, trans_b=True,
                    out=out.reshape((P, R), order="F"))
    else:
        X3 = X.data.reshape((P, I, O), order="F")
        Y3 = out.reshape((P, R, O), order="F")
        if O >= BATCH_MIN_SLABS and P * I <= BATCH_MAX_SLAB:
            linalg.batched_gemm(X3, U, Y3)
        else:
            for o in range(O):
                linalg.gemm(X3[:, :, o], U, trans_b=True, out=Y3[:, :, o])
    return DenseTensor(dims, out, copy=False)


def _check_pair(X: DenseTensor, Y: DenseTensor, n: int) -> None:
    if X.order != Y.order:
        raise ShapeMismatch(f"orders differ: {X.order} vs {Y.order}")
    for m, (a, b) in enumerate(zip(X.dims, Y.dims)):
        if m != n and a != b:
            raise ShapeMismatch(f"dimension {m} differs: {a} vs {b}")


def ttt_mode(X: DenseTensor, Y: DenseTensor, n: int) -> np.ndarray:
    """Contract ``X`` and ``Y`` over every mode but ``n``: ``X_(n) @ Y_(n).T``.

    Intermediate modes accumulate the per-slab products straight into the
    ``I_n x R_n`` result.
    """
    n = check_mode(n, X.order)
    _check_pair(X, Y, n)
    P, I, O = loop_split(X.dims, n)
    R = Y.dims[n]
    Z = allocate(I * R, "ttt").reshape((I, R), order="F")

    regime = _regime(X.order, n)
    if regime == "first":
        linalg.gemm(X.data.reshape((I, O), order="F"), Y.data.reshape((R, O), order="F"),
                    trans_b=True, out=Z)
    elif regime == "last":
        linalg.gemm(X.data.reshape((P, I), order="F"), Y.data.reshape((P, R), order="F"),
                    trans_a=True, out=Z)
    else:
        X3 = X.data.reshape((P, I, O), order="F")
        Y3 = Y.data.reshape((P, R, O), order="F")
        for o in range(O):
            linalg.gemm(X3[:, :, o], Y3[:, :, o], trans_a=True, out=Z, beta=1.0 if o else 0.0)
    return Z


def gram(X: DenseTensor, n: int) -> np.ndarray:
    """Symmetric ``X_(n) @ X_(n).T`` computed through rank-k updates."""
    n = check_mode(n, X.order)
    P, I, O = loop_split(X.dims, n)
    Z = allocate(I * I, "gram").reshape((I, I), order="F")

    regime = _regime(X.order, n)
    if regime == "first":
        linalg.syrk(X.data.reshape((I, O), order="F"), out=Z)
    elif regime == "last":
        linalg.syrk(X.data.reshape((P, I), order="F"), trans=True, out=Z)
    else:
        X3 = X.data.reshape((P, I, O), order="F")
        for o in range(O):
            linalg.syrk(X3[:, :, o], trans=True, out=Z, beta=1.0 if o else 0.0)
    # only the upper triangle was written; mirror it
    lower = np.tril_indices(I, -1)
    Z[lower] = Z.T[lower]
    return Z
