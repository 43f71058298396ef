"""On-disk formats: ``.dten`` binary tensors and ``.tucker`` containers.

``.dten`` layout (all little-endian)::

    b"DTEN" | u32 version (=1) | u32 order N | N x u64 dims | prod(dims) x f64

The payload is column-major. A ``.tucker`` container is a directory holding
``core.dten``, ``factor_1.dten`` .. ``factor_N.dten`` (order-2 tensors) and
``meta.json``.
"""
from __future__ import annotations

import json
import struct
from math import prod
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensor import DenseTensor

__all__ = [
    "DTEN_MAGIC",
    "DTEN_VERSION",
    "write_dten",
    "read_dten",
    "dten_bytes",
    "parse_dten",
    "save_decomposition",
    "load_decomposition",
]

DTEN_MAGIC = b"DTEN"
DTEN_VERSION = 1
_HEAD = struct.Struct("<4sII")


def dten_bytes(X: DenseTensor) -> bytes:
    head = _HEAD.pack(DTEN_MAGIC, DTEN_VERSION, X.order)
    dims = struct.pack(f"<{X.order}Q", *X.dims)
    return head + dims + X.data.astype("<f8", copy=False).tobytes()


def parse_dten(buf: bytes) -> DenseTensor:
    if len(buf) < _HEAD.size:
        raise FormatError(f"file is {len(buf)} bytes, too short for a .dten header")
    magic, version, order = _HEAD.unpack_from(buf, 0)
    if magic != DTEN_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DTEN_MAGIC!r}")
    if version != DTEN_VERSION:
        raise FormatError(f"unsupported .dten version {version}")
    if order < 1:
        raise FormatError("tensor order must be at least 1")
    head_end = _HEAD.size + 8 * order
    if len(buf) < head_end:
        raise FormatError(f"truncated header: {len(buf)} bytes, need {head_end}")
    dims = struct.unpack_from(f"<{order}Q", buf, _HEAD.size)
    if any(d < 1 for d in dims):
        raise FormatError(f"invalid dims {dims}")
    expected = head_end + 8 * prod(dims)
    if len(buf) != expected:
        kind = "truncated" if len(buf) < expected else "oversized"
        raise FormatError(f"{kind} payload: file is {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", offset=head_end).astype(np.float64)
    return DenseTensor(dims, data, copy=False)


def write_dten(path, X) -> None:
    if isinstance(X, np.ndarray):
        X = DenseTensor.from_array(X)
    Path(path).write_bytes(dten_bytes(X))


def read_dten(path) -> DenseTensor:
    return parse_dten(Path(path).read_bytes())


def save_decomposition(path, T, meta: dict | None = None) -> None:
    """Write ``T`` as a ``.tucker`` directory; ``meta`` is merged into meta.json."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_dten(root / "core.dten", T.core)
    for n, U in enumerate(T.factors, start=1):
        write_dten(root / f"factor_{n}.dten", np.asarray(U))
    doc = {
        "original_dims": list(T.original_dims),
        "ranks": list(T.core.dims),
    }
    doc.update(meta or {})
    (root / "meta.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_decomposition(path):
    """Return ``(TuckerDecomposition, meta)`` read from a ``.tucker`` directory."""
    from .driver import TuckerDecomposition

    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a .tucker directory")
    try:
        meta = json.loads((root / "meta.json").read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"meta.json is not valid JSON: {exc}") from exc
    core = read_dten(root / "core.dten")
    factors = []
    for n in range(1, core.order + 1):
        F = read_dten(root / f"factor_{n}.dten")
        if F.order != 2:
            raise FormatError(f"factor_{n}.dten must be order 2, got order {F.order}")
        factors.append(np.asfortranarray(F.to_array()))
    T = TuckerDecomposition(core, factors, tuple(meta.get("original_dims", ())))
    try:
        T.validate()
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return T, meta
