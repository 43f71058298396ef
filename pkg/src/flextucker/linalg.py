"""Dense matrix products and factorizations used by the kernels and solvers.

Products go through LAPACK/BLAS via scipy. Every product call is reported to
the active :class:`GemmCounter` objects so tests can check call structure and
flop totals without touching the kernels.

Flop convention: a general product of ``(m x k)`` by ``(k x n)`` is charged
``2*m*k*n``; a symmetric rank-k update producing an ``n x n`` result is
charged ``n*n*k`` (half the entries, two flops each).
"""
from __future__ import annotations

import contextvars
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
import scipy.linalg
from scipy.linalg.blas import dgemm, dsyrk

from .errors import (
    NoConvergence,
    NotSPD,
    NotSquare,
    RankDeficient,
    RankTooLarge,
    ShapeMismatch,
)

__all__ = [
    "EigPair",
    "QrPair",
    "GemmCounter",
    "count_gemm",
    "gemm",
    "syrk",
    "batched_gemm",
    "sym_eig_top_r",
    "thin_qr",
    "thin_svd",
    "spd_solve",
    "spd_inverse",
    "fix_signs",
]


class EigPair(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


class QrPair(NamedTuple):
    q: np.ndarray
    r: np.ndarray


@dataclass
class GemmCounter:
    calls: Counter = field(default_factory=Counter)
    flops: Counter = field(default_factory=Counter)

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    @property
    def total_flops(self) -> int:
        return sum(self.flops.values())

    def _record(self, kind: str, calls: int, flops: int) -> None:
        self.calls[kind] += calls
        self.flops[kind] += flops


_counters: contextvars.ContextVar[tuple] = contextvars.ContextVar(
    "flextucker_gemm_counters", default=()
)


@contextmanager
def count_gemm() -> Iterator[GemmCounter]:
    counter = GemmCounter()
    token = _counters.set(_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _counters.reset(token)


def _record(kind: str, calls: int, flops: int) -> None:
    for c in _counters.get():
        c._record(kind, calls, flops)


def _fortran(a: np.ndarray, trans: bool) -> tuple[np.ndarray, bool]:
    # A C-contiguous matrix is the F-contiguous transpose; flip instead of copying.
    if a.flags.f_contiguous:
        return a, trans
    if a.flags.c_contiguous:
        return a.T, not trans
    return np.asfortranarray(a), trans


def _check_out(out: np.ndarray, shape: tuple) -> None:
    if out.shape != shape or out.dtype != np.float64 or not out.flags.f_contiguous:
        raise ShapeMismatch(f"output buffer must be F-contiguous float64 of shape {shape}")


def gemm(A, B, trans_a: bool = False, trans_b: bool = False, *, out=None, beta: float = 0.0):
    """``op(A) @ op(B)``; with ``out`` given, computes ``op(A)@op(B) + beta*out`` in place."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2:
        raise ShapeMismatch("gemm operands must be matrices")
    m, k = A.shape[::-1] if trans_a else A.shape
    k2, n = B.shape[::-1] if trans_b else B.shape
    if k != k2:
        raise ShapeMismatch(f"inner dimensions differ: {k} vs {k2}")
    a, ta = _fortran(A, trans_a)
    b, tb = _fortran(B, trans_b)
    _record("gemm", 1, 2 * m * k * n)
    if out is None:
        return dgemm(1.0, a, b, trans_a=int(ta), trans_b=int(tb))
    _check_out(out, (m, n))
    res = dgemm(1.0, a, b, beta=beta, c=out, trans_a=int(ta), trans_b=int(tb), overwrite_c=1)
    if res is not out and not np.shares_memory(res, out):
        out[...] = res
    return out


def syrk(A, trans: bool = False, *, out=None, beta: float = 0.0):
    """Upper triangle of ``A @ A.T`` (or ``A.T @ A`` when ``trans``); lower part untouched."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeMismatch("syrk operand must be a matrix")
    n, k = A.shape[::-1] if trans else A.shape
    a, t = _fortran(A, trans)
    _record("syrk", 1, n * n * k)
    if out is None:
        return dsyrk(1.0, a, trans=int(t))
    _check_out(out, (n, n))
    res = dsyrk(1.0, a, beta=beta, c=out, trans=int(t), overwrite_c=1)
    if res is not out and not np.shares_memory(res, out):
        out[...] = res
    return out


def batched_gemm(A3: np.ndarray, U: np.ndarray, out3: np.ndarray) -> np.ndarray:
    """``out3[:, :, o] = A3[:, :, o] @ U.T`` for every slab ``o`` in one backend call.

    Counted as one GEMM per slab.
    """
    P, I, O = A3.shape
    R = U.shape[0]
    if U.shape[1] != I or out3.shape != (P, R, O):
        raise ShapeMismatch("batched_gemm operand shapes disagree")
    _record("gemm", O, 2 * P * I * R * O)
    np.matmul(np.moveaxis(A3, 2, 0), U.T, out=np.moveaxis(out3, 2, 0))
    return out3


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns in place so each one's first largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[idx, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    V *= signs
    return signs


def sym_eig_top_r(S, r: int) -> EigPair:
    """The ``r`` algebraically largest eigenpairs of symmetric ``S``, descending."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {S.shape}")
    m = S.shape[0]
    if not 1 <= r <= m:
        raise RankTooLarge(f"cannot take {r} eigenpairs of a {m}x{m} matrix")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > 1e-10 * scale:
        raise ShapeMismatch("matrix is not symmetric")
    S = 0.5 * (S + S.T)
    try:
        w, V = scipy.linalg.eigh(S, subset_by_index=[m - r, m - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NoConvergence(str(exc)) from exc
    w = w[::-1].copy()
    V = np.asfortranarray(V[:, ::-1])
    fix_signs(V)
    return EigPair(w, V)


def thin_qr(A) -> QrPair:
    """Reduced QR with a nonnegative diagonal in ``r``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise ShapeMismatch(f"thin QR needs rows >= cols, got {A.shape}")
    q, r = np.linalg.qr(A, mode="reduced")
    d = np.diag(r)
    signs = np.where(d < 0, -1.0, 1.0)
    q = q * signs
    r = r * signs[:, None]
    if np.min(np.abs(d)) < 1e-12 * np.linalg.norm(A):
        raise RankDeficient("matrix does not have full column rank")
    return QrPair(np.asfortranarray(q), np.asfortranarray(r))


def thin_svd(A):
    """``(U, sigma, Vt)`` with ``A = U diag(sigma) Vt``; signs fixed on ``U``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise ShapeMismatch("thin SVD needs a nonempty matrix")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    U = np.asfortranarray(U)
    signs = fix_signs(U)
    Vt = Vt * signs[:, None]
    return U, s, Vt


def spd_solve(A, B):
    """Solve ``A X = B`` for symmetric positive definite ``A`` by Cholesky."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ShapeMismatch(f"right-hand side has {B.shape[0]} rows, expected {A.shape[0]}")
    try:
        factor = scipy.linalg.cho_factor(A, lower=False)
    except np.linalg.LinAlgError as exc:
        raise NotSPD(str(exc)) from exc
    # pivot ratio below 1e-8 means cond(A) beyond ~1e16
    d = np.abs(np.diag(factor[0]))
    if d.min() <= 1e-8 * d.max():
        raise NotSPD("matrix is numerically singular")
    return scipy.linalg.cho_solve(factor, B)


def spd_inverse(A):
    return spd_solve(A, np.eye(np.asarray(A).shape[0]))
