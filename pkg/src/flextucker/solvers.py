"""Per-mode factor/core solvers for sequentially truncated HOSVD.

Each solver takes the current work tensor ``Y`` and a truncation ``R`` for
mode ``n`` and returns the ``I_n x R`` factor with orthonormal columns plus
``Y`` shrunk to size ``R`` along mode ``n``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import linalg
from .errors import RankExceedsDim
from .kernels import gram, ttm, ttt_mode
from .tensor import DenseTensor, check_mode, matricize, tensorize

__all__ = [
    "Solver",
    "AlsOptions",
    "ModeResult",
    "eig_mode_solver",
    "als_iterate",
    "als_mode_solver",
    "svd_mode_solver",
]


class Solver(enum.IntEnum):
    EIG = 0
    ALS = 1
    SVD = 2


@dataclass(frozen=True)
class AlsOptions:
    """``num_iters`` ALS sweeps; stop early once the relative change of ``L``
    drops to ``rel_tol`` (0 disables). ``seed`` drives the initial guess."""

    num_iters: int = 5
    rel_tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.num_iters) < 1:
            raise ValueError("num_iters must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")


@dataclass
class ModeResult:
    factor: np.ndarray
    shrunk: DenseTensor
    iterations_run: int
    solver_used: Solver
    # eigenvalues (EIG) or squared singular values (SVD) that were kept
    retained: Optional[np.ndarray] = None


def _check_rank(Y: DenseTensor, n: int, rank: int) -> int:
    n = check_mode(n, Y.order)
    if not 1 <= rank <= Y.dims[n]:
        raise RankExceedsDim(f"truncation {rank} invalid for mode {n} of size {Y.dims[n]}")
    return n


def eig_mode_solver(Y: DenseTensor, n: int, rank: int) -> ModeResult:
    n = _check_rank(Y, n, rank)
    S = gram(Y, n)
    eig = linalg.sym_eig_top_r(S, rank)
    U = eig.vectors
    return ModeResult(U, ttm(Y, U.T, n), 0, Solver.EIG, eig.values)


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def als_iterate(
    Y: DenseTensor,
    n: int,
    L0,
    opts: AlsOptions = AlsOptions(),
    callback: Optional[Callable[[int, np.ndarray, DenseTensor], None]] = None,
):
    """Alternating least squares fit ``Y_(n) ~ L @ R.T``.

    Returns ``(L, Rt, iterations)`` where ``Rt`` is ``R`` folded back into a
    tensor with ``R.shape[1]`` along mode ``n``, i.e. ``Rt_(n) = R.T``. The
    optional ``callback(k, L_next, Rt)`` sees each completed sweep.
    """
    n = check_mode(n, Y.order)
    L = np.asfortranarray(L0, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != Y.dims[n]:
        raise ValueError(f"initial guess must have {Y.dims[n]} rows, got shape {L.shape}")
    Rt = None
    k = 0
    while k < opts.num_iters:
        # R_k = (Y_(n)^T L)(L^T L)^-1, kept folded
        W = _sym(linalg.spd_inverse(linalg.gemm(L, L, trans_a=True)))
        Rt = ttm(ttm(Y, L.T, n), W, n)
        # L_{k+1} = (Y_(n) R_k)(R_k^T R_k)^-1
        V = _sym(linalg.spd_inverse(ttt_mode(Rt, Rt, n)))
        L_next = linalg.gemm(ttt_mode(Y, Rt, n), V)
        k += 1
        if callback is not None:
            callback(k, L_next, Rt)
        change = np.linalg.norm(L_next - L) / np.linalg.norm(L)
        L = L_next
        if opts.rel_tol > 0 and change <= opts.rel_tol:
            break
    return L, Rt, k


def als_mode_solver(Y: DenseTensor, n: int, rank: int, opts: AlsOptions = AlsOptions()) -> ModeResult:
    """ALS fit from a seeded Gaussian start, then ``L = Q R`` orthonormalization.

    The shrunk tensor is ``Rt x_n Rhat`` so that ``factor @ shrunk_(n)``
    equals the ALS product ``L @ R.T``.
    """
    n = _check_rank(Y, n, rank)
    rng = np.random.default_rng((opts.seed, n))
    L0 = np.asfortranarray(rng.standard_normal((Y.dims[n], rank)))
    L, Rt, iters = als_iterate(Y, n, L0, opts)
    q, r = linalg.thin_qr(L)
    return ModeResult(q, ttm(Rt, r, n), iters, Solver.ALS)


def svd_mode_solver(Y: DenseTensor, n: int, rank: int) -> ModeResult:
    """Reference solver: truncated SVD of the explicit unfolding."""
    n = _check_rank(Y, n, rank)
    U, s, Vt = linalg.thin_svd(matricize(Y, n))
    k = min(rank, s.size)
    factor = U[:, :k]
    core = s[:k, None] * Vt[:k]
    if rank > k:
        # fewer columns than the truncation: pad with an orthonormal complement
        extra = scipy.linalg.null_space(factor.T)[:, : rank - k]
        factor = np.hstack([factor, extra])
        core = np.vstack([core, np.zeros((rank - k, core.shape[1]))])
    dims = Y.dims[:n] + (rank,) + Y.dims[n + 1:]
    return ModeResult(np.asfortranarray(factor), tensorize(core, dims, n), 0, Solver.SVD, s[:k] ** 2)
