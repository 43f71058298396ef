"""Dense column-major tensors, explicit (un)folding and synthetic generators.

Mode indices are zero-based throughout the code. A tensor's flat buffer keeps
element ``(i_0, ..., i_{N-1})`` at ``i_0 + I_0*i_1 + I_0*I_1*i_2 + ...``.
Matrices are plain 2-D ``numpy`` arrays, Fortran-ordered when produced here.
"""
from __future__ import annotations

import contextvars
import weakref
from contextlib import contextmanager
from dataclasses import dataclass, field
from math import prod
from typing import Iterator, Sequence

import numpy as np

from .errors import ModeOutOfRange, RankExceedsDim, ShapeMismatch

__all__ = [
    "DenseTensor",
    "AllocationTracker",
    "allocate",
    "track_allocations",
    "frobenius_norm",
    "matricize",
    "tensorize",
    "random_tensor",
    "synth_lowrank",
    "check_mode",
]


# --------------------------------------------------------------------------
# allocation accounting

_trackers: contextvars.ContextVar[tuple] = contextvars.ContextVar(
    "flextucker_alloc_trackers", default=()
)


@dataclass
class AllocationRecord:
    label: str
    size: int
    ref: weakref.ref

    @property
    def alive(self) -> bool:
        return self.ref() is not None


@dataclass
class AllocationTracker:
    """Records every buffer handed out by :func:`allocate` while active.

    ``events`` holds, for each allocation, the sizes (in elements) of all
    tracked buffers still alive right after it, the new one included.
    """

    records: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def _add(self, label: str, buf: np.ndarray) -> None:
        self.records.append(AllocationRecord(label, buf.size, weakref.ref(buf)))
        self.events.append(tuple(r.size for r in self.records if r.alive))

    @property
    def count(self) -> int:
        return len(self.records)

    def sizes(self, label: str | None = None) -> list[int]:
        return [r.size for r in self.records if label is None or r.label == label]

    def live(self) -> list[AllocationRecord]:
        return [r for r in self.records if r.alive]

    def max_live_buffer(self) -> int:
        """Largest single buffer observed alive at any allocation event."""
        return max((max(e) for e in self.events if e), default=0)

    def peak_live_elements(self) -> int:
        return max((sum(e) for e in self.events), default=0)


@contextmanager
def track_allocations() -> Iterator[AllocationTracker]:
    tracker = AllocationTracker()
    token = _trackers.set(_trackers.get() + (tracker,))
    try:
        yield tracker
    finally:
        _trackers.reset(token)


def allocate(size: int, label: str = "buffer") -> np.ndarray:
    """Return an uninitialised flat float64 buffer, reporting it to trackers."""
    buf = np.empty(int(size), dtype=np.float64)
    for tracker in _trackers.get():
        tracker._add(label, buf)
    return buf


# --------------------------------------------------------------------------
# tensor type


class DenseTensor:
    """N-th order dense tensor of float64 values in column-major layout.

    Parameters
    ----------
    dims:
        Positive mode sizes ``(I_0, ..., I_{N-1})``.
    data:
        Flat sequence of ``prod(dims)`` values in column-major order.
    copy:
        Copy ``data`` (default). Kernels pass freshly allocated buffers with
        ``copy=False`` to avoid a second allocation.

    The buffer is marked read-only once wrapped.
    """

    __slots__ = ("dims", "data", "__weakref__")

    def __init__(self, dims: Sequence[int], data, *, copy: bool = True):
        dims = tuple(int(d) for d in dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ShapeMismatch(f"invalid dims {dims}: need N >= 1 and every I_n >= 1")
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 1:
            raise ShapeMismatch("data must be a flat column-major sequence")
        if arr.size != prod(dims):
            raise ShapeMismatch(
                f"data has {arr.size} entries but dims {dims} need {prod(dims)}"
            )
        if copy:
            arr = arr.copy()
        arr.flags.writeable = False
        self.dims = dims
        self.data = arr

    @classmethod
    def from_array(cls, array) -> "DenseTensor":
        """Wrap an N-d array, indexing it logically (layout of ``array`` is irrelevant)."""
        a = np.asarray(array, dtype=np.float64)
        if a.ndim == 0:
            a = a.reshape(1)
        return cls(a.shape, np.ravel(a, order="F"), copy=True)

    @classmethod
    def full(cls, dims: Sequence[int], value: float) -> "DenseTensor":
        return cls(dims, np.full(prod(dims), float(value)), copy=False)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def to_array(self) -> np.ndarray:
        """Read-only N-d view with logical indexing ``x[i_0, ..., i_{N-1}]``."""
        return self.data.reshape(self.dims, order="F")

    def __getitem__(self, index):
        return self.to_array()[index]

    def __repr__(self) -> str:
        shape = "x".join(map(str, self.dims))
        return f"DenseTensor({shape}, norm={frobenius_norm(self):.6g})"


def check_mode(n: int, order: int) -> int:
    if not isinstance(n, (int, np.integer)) or not 0 <= n < order:
        raise ModeOutOfRange(f"mode {n} out of range for order-{order} tensor")
    return int(n)


def frobenius_norm(X: DenseTensor) -> float:
    return float(np.sqrt(np.dot(X.data, X.data)))


def matricize(X: DenseTensor, n: int) -> np.ndarray:
    """Explicit mode-``n`` unfolding as a fresh ``I_n x J_n`` Fortran array.

    Columns enumerate the remaining indices with lower modes varying fastest.
    This always copies, mode 0 included; it is the reference path the
    matricization-free kernels are checked against.
    """
    n = check_mode(n, X.order)
    rest = X.dims[:n] + X.dims[n + 1:]
    out = allocate(X.size, "matricize")
    np.copyto(out.reshape((X.dims[n],) + rest, order="F"), np.moveaxis(X.to_array(), n, 0))
    return out.reshape((X.dims[n], prod(rest)), order="F")


def tensorize(M, dims: Sequence[int], n: int) -> DenseTensor:
    """Inverse of :func:`matricize`."""
    dims = tuple(int(d) for d in dims)
    n = check_mode(n, len(dims))
    M = np.asarray(M, dtype=np.float64)
    rest = dims[:n] + dims[n + 1:]
    if M.ndim != 2 or M.shape != (dims[n], prod(rest)):
        raise ShapeMismatch(
            f"matrix of shape {M.shape} cannot be folded into {dims} along mode {n}"
        )
    out = allocate(prod(dims), "tensorize")
    np.copyto(
        np.moveaxis(out.reshape(dims, order="F"), n, 0),
        M.reshape((dims[n],) + rest, order="F"),
    )
    return DenseTensor(dims, out, copy=False)


# --------------------------------------------------------------------------
# generators


def random_tensor(dims: Sequence[int], seed=None, distribution: str = "uniform") -> DenseTensor:
    """I.i.d. entries from ``uniform`` [0, 1) or standard ``normal``."""
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    size = prod(dims)
    if distribution == "uniform":
        data = rng.random(size)
    elif distribution == "normal":
        data = rng.standard_normal(size)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    return DenseTensor(dims, data, copy=False)


def synth_lowrank(dims: Sequence[int], ranks: Sequence[int], seed=None) -> DenseTensor:
    """Random core of shape ``ranks`` times orthonormal random factors.

    The result has multilinear rank at most ``ranks``.
    """
    from .kernels import ttm

    dims = tuple(int(d) for d in dims)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(dims):
        raise ShapeMismatch(f"{len(ranks)} ranks given for an order-{len(dims)} tensor")
    for n, (r, d) in enumerate(zip(ranks, dims)):
        if not 1 <= r <= d:
            raise RankExceedsDim(f"rank {r} invalid for mode {n} of size {d}")
    rng = np.random.default_rng(seed)
    Y = DenseTensor(ranks, rng.standard_normal(prod(ranks)), copy=False)
    for n, (d, r) in enumerate(zip(dims, ranks)):
        q, _ = np.linalg.qr(rng.standard_normal((d, r)))
        Y = ttm(Y, q, n)
    return Y
