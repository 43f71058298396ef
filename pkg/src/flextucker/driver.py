"""Mode-wise flexible st-HOSVD: pick a solver per mode, shrink, repeat."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ModeFailure, NumericalError, RankExceedsDim, ShapeMismatch, ZeroNormInput
from .kernels import ttm
from .selector import (
    DEFAULT_COSTS,
    CostModelParams,
    DecisionTreeModel,
    cost_als,
    cost_eig,
    extract_features,
    heuristic_choice,
    predict,
)
from .solvers import AlsOptions, Solver, als_mode_solver, eig_mode_solver, svd_mode_solver
from .tensor import DenseTensor, frobenius_norm

__all__ = [
    "Strategy",
    "parse_strategy",
    "ModeReport",
    "TuckerDecomposition",
    "sthosvd",
    "reconstruct",
    "relative_error",
]

_LETTERS = {"e": Solver.EIG, "a": Solver.ALS}


@dataclass(frozen=True)
class Strategy:
    """How each mode's solver is chosen.

    ``kind`` is one of ``adaptive`` (decision tree), ``costmodel`` (flop
    estimates), ``eig``, ``als``, ``svd`` or ``manual`` (explicit per-mode
    ``choices``).
    """

    kind: str
    model: Optional[DecisionTreeModel] = field(default=None, compare=False)
    choices: tuple = ()
    cost_params: CostModelParams = DEFAULT_COSTS

    @classmethod
    def adaptive(cls, model: DecisionTreeModel) -> "Strategy":
        return cls("adaptive", model=model)

    @classmethod
    def cost_model(cls, params: CostModelParams = DEFAULT_COSTS) -> "Strategy":
        return cls("costmodel", cost_params=params)

    @classmethod
    def fixed_eig(cls) -> "Strategy":
        return cls("eig")

    @classmethod
    def fixed_als(cls) -> "Strategy":
        return cls("als")

    @classmethod
    def fixed_svd(cls) -> "Strategy":
        return cls("svd")

    @classmethod
    def manual(cls, choices: Sequence) -> "Strategy":
        parsed = tuple(Solver(c) if not isinstance(c, str) else _LETTERS[c.lower()[0]] for c in choices)
        if any(c not in (Solver.EIG, Solver.ALS) for c in parsed):
            raise ValueError("manual strategies choose between EIG and ALS only")
        return cls("manual", choices=parsed)

    @property
    def name(self) -> str:
        if self.kind == "manual":
            return "manual:" + ",".join("e" if c == Solver.EIG else "a" for c in self.choices)
        return self.kind

    def choose(self, mode: int, I: int, R: int, J: int) -> Solver:
        if self.kind == "adaptive":
            return predict(self.model, extract_features(I, R, J))
        if self.kind == "costmodel":
            return heuristic_choice(I, R, J, self.cost_params)
        if self.kind == "eig":
            return Solver.EIG
        if self.kind == "als":
            return Solver.ALS
        if self.kind == "svd":
            return Solver.SVD
        if self.kind == "manual":
            return self.choices[mode]
        raise ValueError(f"unknown strategy kind {self.kind!r}")


def parse_strategy(text: str, model: Optional[DecisionTreeModel] = None) -> Strategy:
    """Parse ``adaptive|costmodel|eig|als|svd|manual:e,a,...``."""
    text = text.strip().lower()
    if text.startswith("manual:"):
        letters = [t.strip() for t in text[len("manual:"):].split(",") if t.strip()]
        if not letters or any(t not in _LETTERS for t in letters):
            raise ValueError(f"bad manual strategy {text!r}; expected e.g. manual:e,a,e")
        return Strategy.manual(letters)
    if text == "adaptive":
        if model is None:
            raise ValueError("the adaptive strategy needs a trained model")
        return Strategy.adaptive(model)
    if text in ("costmodel", "cost"):
        return Strategy.cost_model()
    if text in ("eig", "als", "svd"):
        return Strategy(text)
    raise ValueError(f"unknown strategy {text!r}")


@dataclass
class ModeReport:
    mode: int
    solver_used: str
    selector_decision_time: float
    solver_time: float
    predicted_cost_eig: float
    predicted_cost_als: float
    dims_before: tuple
    dims_after: tuple
    iterations_run: int = 0
    als_seed: Optional[int] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims_before"] = list(self.dims_before)
        d["dims_after"] = list(self.dims_after)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModeReport":
        d = dict(d)
        d["dims_before"] = tuple(d["dims_before"])
        d["dims_after"] = tuple(d["dims_after"])
        return cls(**d)


@dataclass
class TuckerDecomposition:
    core: DenseTensor
    factors: list
    original_dims: tuple

    @property
    def ranks(self) -> tuple:
        return self.core.dims

    def validate(self) -> None:
        if len(self.factors) != self.core.order or len(self.original_dims) != self.core.order:
            raise ShapeMismatch("core order, factor count and original dims disagree")
        for n, U in enumerate(self.factors):
            if U.shape != (self.original_dims[n], self.core.dims[n]):
                raise ShapeMismatch(
                    f"factor {n} has shape {U.shape}, expected "
                    f"{(self.original_dims[n], self.core.dims[n])}"
                )


def _check_ranks(X: DenseTensor, ranks) -> tuple:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != X.order:
        raise ShapeMismatch(f"{len(ranks)} ranks given for an order-{X.order} tensor")
    for n, (r, d) in enumerate(zip(ranks, X.dims)):
        if not 1 <= r <= d:
            raise RankExceedsDim(f"rank {r} invalid for mode {n + 1} of size {d}")
    return ranks


def sthosvd(
    X: DenseTensor,
    ranks: Sequence[int],
    strategy: Strategy = Strategy.cost_model(),
    opts: AlsOptions = AlsOptions(),
):
    """Sequentially truncated HOSVD with a per-mode solver choice.

    Modes are processed in ascending order. The selector sees the current
    work-tensor shape, so ``J`` already reflects modes shrunk earlier.

    Returns ``(TuckerDecomposition, [ModeReport, ...])``.
    """
    ranks = _check_ranks(X, ranks)
    if strategy.kind == "manual" and len(strategy.choices) != X.order:
        raise ShapeMismatch(f"manual strategy lists {len(strategy.choices)} modes, tensor has {X.order}")
    Y = X
    factors = []
    reports = []
    for n, R in enumerate(ranks):
        I = Y.dims[n]
        J = Y.size // I
        t0 = time.perf_counter()
        choice = strategy.choose(n, I, R, J)
        t_select = time.perf_counter() - t0
        t0 = time.perf_counter()
        try:
            if choice == Solver.EIG:
                result = eig_mode_solver(Y, n, R)
            elif choice == Solver.ALS:
                result = als_mode_solver(Y, n, R, opts)
            else:
                result = svd_mode_solver(Y, n, R)
        except NumericalError as exc:
            raise ModeFailure(n, exc) from exc
        t_solve = time.perf_counter() - t0
        reports.append(
            ModeReport(
                mode=n,
                solver_used=Solver(choice).name,
                selector_decision_time=t_select,
                solver_time=t_solve,
                predicted_cost_eig=cost_eig(I, R, J, strategy.cost_params),
                predicted_cost_als=cost_als(I, R, J, strategy.cost_params),
                dims_before=Y.dims,
                dims_after=result.shrunk.dims,
                iterations_run=result.iterations_run,
                als_seed=opts.seed if choice == Solver.ALS else None,
            )
        )
        factors.append(result.factor)
        Y = result.shrunk
    return TuckerDecomposition(Y, factors, X.dims), reports


def reconstruct(T: TuckerDecomposition) -> DenseTensor:
    T.validate()
    Y = T.core
    for n, U in enumerate(T.factors):
        Y = ttm(Y, U, n)
    return Y


def relative_error(X: DenseTensor, T: TuckerDecomposition) -> float:
    """``||reconstruct(T) - X||_F / ||X||_F``."""
    norm = frobenius_norm(X)
    if norm == 0.0:
        raise ZeroNormInput("relative error is undefined for a zero tensor")
    if tuple(T.original_dims) != X.dims:
        raise ShapeMismatch(f"decomposition is for dims {tuple(T.original_dims)}, tensor has {X.dims}")
    Xhat = reconstruct(T)
    diff = Xhat.data - X.data
    return float(np.sqrt(np.dot(diff, diff)) / norm)
