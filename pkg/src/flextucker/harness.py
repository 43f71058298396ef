"""Offline pipeline: benchmark both solvers per mode, label, split, evaluate,
and compare whole-decomposition strategies."""
from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from dataclasses import dataclass, field
from math import prod
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .driver import Strategy, relative_error, sthosvd
from .errors import EmptyDataset, NumericalError, TuckerError
from .selector import DecisionTreeModel, TrainingSample, extract_features
from .solvers import AlsOptions, als_mode_solver, eig_mode_solver
from .tensor import DenseTensor, random_tensor

log = logging.getLogger(__name__)

__all__ = [
    "GenConfig",
    "GeneratedSamples",
    "draw_ranks",
    "generate_samples",
    "write_samples_csv",
    "read_samples_csv",
    "SAMPLE_COLUMNS",
    "split_samples",
    "evaluate_model",
    "BenchCase",
    "BenchReport",
    "random_cases",
    "bench_compare",
]

REPORT_SCHEMA_VERSION = 1

SAMPLE_COLUMNS = (
    ["I", "R", "J"]
    + [f"f{i}" for i in range(4, 11)]
    + ["time_eig_s", "time_als_s", "label", "tie_flag", "dims", "ranks", "mode", "seed"]
)


@dataclass
class GenConfig:
    """Synthetic sample-generation settings (desk-scale defaults).

    Each tensor has ``order`` modes with sizes uniform in ``dim_range``;
    truncations are drawn uniformly from ``[rank_min, rank_frac * I_n]``
    (see :func:`draw_ranks`). Tensors larger than ``memory_cap`` bytes are
    skipped.
    """

    sample_count: int = 1000
    dim_range: tuple = (10, 200)
    order: int = 3
    seed: int = 0
    memory_cap: int = 1 << 30
    repeats: int = 3
    rank_min: int = 10
    rank_frac: float = 0.5
    als_iters: int = 5
    tie_band: float = 0.05
    max_tensors: Optional[int] = None

    def __post_init__(self):
        lo, hi = self.dim_range
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid dim_range {self.dim_range}: need 1 <= lo <= hi")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.sample_count < 0 or self.repeats < 1:
            raise ValueError("sample_count must be >= 0 and repeats >= 1")


@dataclass
class GeneratedSamples:
    samples: list = field(default_factory=list)
    tensors_used: int = 0
    skipped_memory: int = 0
    failed_modes: int = 0

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def summary(self) -> dict:
        return {
            "samples": len(self.samples),
            "tensors_used": self.tensors_used,
            "skipped_memory": self.skipped_memory,
            "failed_modes": self.failed_modes,
            "ties": sum(s.tie for s in self.samples),
        }


def draw_ranks(dims, rng: np.random.Generator, rank_min: int = 10, rank_frac: float = 0.5) -> tuple:
    """Truncations uniform in ``[rank_min, rank_frac*I_n]``, clamped to ``>= 1``.

    Each rank is also capped by the column count ``J_n`` it will meet during
    the sweep (earlier modes already shrunk), past which extra rank is void.
    """
    ranks = []
    for n, d in enumerate(dims):
        hi = max(1, int(rank_frac * d))
        lo = min(rank_min, hi)
        r = int(rng.integers(lo, hi + 1))
        sweep_j = prod(ranks) * prod(dims[n + 1:])
        ranks.append(max(1, min(r, sweep_j)))
    return tuple(ranks)


def _median_time(fn: Callable, repeats: int):
    result = fn()  # warm-up, not timed
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def generate_samples(cfg: GenConfig) -> GeneratedSamples:
    """Time both solvers on every mode of random tensors until enough samples exist.

    Both solvers see the same work tensor; the sweep then continues with the
    faster solver's output so later modes meet realistic shrunk shapes.
    """
    rng = np.random.default_rng(cfg.seed)
    out = GeneratedSamples()
    lo, hi = cfg.dim_range
    opts_base = AlsOptions(num_iters=cfg.als_iters)
    attempts = 0
    while len(out.samples) < cfg.sample_count:
        if cfg.max_tensors is not None and attempts >= cfg.max_tensors:
            break
        attempts += 1
        dims = tuple(int(d) for d in rng.integers(lo, hi + 1, size=cfg.order))
        ranks = draw_ranks(dims, rng, cfg.rank_min, cfg.rank_frac)
        tensor_seed = int(rng.integers(2**31))
        if 8 * prod(dims) > cfg.memory_cap:
            out.skipped_memory += 1
            log.debug("skipping %s: exceeds memory cap", dims)
            continue
        out.tensors_used += 1
        Y = random_tensor(dims, tensor_seed)
        opts = AlsOptions(num_iters=opts_base.num_iters, seed=tensor_seed)
        for n, R in enumerate(ranks):
            I = Y.dims[n]
            J = Y.size // I
            try:
                t_eig, res_eig = _median_time(lambda: eig_mode_solver(Y, n, R), cfg.repeats)
                t_als, res_als = _median_time(lambda: als_mode_solver(Y, n, R, opts), cfg.repeats)
            except NumericalError as exc:
                log.warning("mode %d of %s failed: %s", n, dims, exc)
                out.failed_modes += 1
                break
            out.samples.append(
                TrainingSample.from_times(
                    I, R, J, t_eig, t_als, cfg.tie_band,
                    dims=dims, ranks=ranks, mode=n, seed=tensor_seed,
                )
            )
            Y = res_eig.shrunk if t_eig <= t_als else res_als.shrunk
    return out


def _shape_str(shape) -> str:
    return "x".join(str(int(d)) for d in shape)


def write_samples_csv(path, samples: Sequence[TrainingSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for s in samples:
            f = s.features
            p = s.provenance
            w.writerow(
                [int(f[0]), int(f[1]), int(f[2])]
                + [repr(float(v)) for v in f[3:]]
                + [repr(s.time_eig), repr(s.time_als), s.label, int(s.tie),
                   _shape_str(p.get("dims", ())), _shape_str(p.get("ranks", ())),
                   p.get("mode", ""), p.get("seed", "")]
            )


def _parse_shape(text: str) -> tuple:
    return tuple(int(t) for t in text.split("x")) if text else ()


def read_samples_csv(path) -> list:
    """Read samples back; ``f4..f10`` are recomputed and checked against ``I,R,J``."""
    samples = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SAMPLE_COLUMNS:
            raise ValueError(f"unexpected sample CSV header: {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            I, R, J = float(row["I"]), float(row["R"]), float(row["J"])
            feats = extract_features(I, R, J)
            stored = np.array([float(row[f"f{i}"]) for i in range(4, 11)])
            if not np.allclose(stored, feats[3:], rtol=1e-12, atol=0):
                raise ValueError(f"line {lineno}: derived features disagree with I, R, J")
            t_eig, t_als = float(row["time_eig_s"]), float(row["time_als_s"])
            label = int(row["label"])
            if label not in (0, 1):
                raise ValueError(f"line {lineno}: label must be 0 or 1")
            samples.append(
                TrainingSample(
                    feats, t_eig, t_als, label, bool(int(row["tie_flag"])),
                    {
                        "dims": _parse_shape(row["dims"]),
                        "ranks": _parse_shape(row["ranks"]),
                        "mode": int(row["mode"]) if row["mode"] else None,
                        "seed": int(row["seed"]) if row["seed"] else None,
                    },
                )
            )
    return samples


def split_samples(samples: Sequence, ratio: float = 0.7, seed: int = 0):
    """Seeded shuffle, then the first ``round(ratio * n)`` go to training."""
    if not 0 < ratio < 1:
        raise ValueError("split ratio must lie strictly between 0 and 1")
    n = len(samples)
    if n == 0:
        raise EmptyDataset("nothing to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(ratio * n + 0.5))
    return [samples[i] for i in perm[:n_train]], [samples[i] for i in perm[n_train:]]


def evaluate_model(model: Union[DecisionTreeModel, Callable], test_samples: Sequence[TrainingSample]) -> dict:
    """Accuracy and regret (predicted solver's time over the faster one's).

    ``model`` may be a tree or any callable mapping a feature vector to a label.
    """
    if len(test_samples) == 0:
        raise EmptyDataset("no test samples")
    predict = model.predict_label if isinstance(model, DecisionTreeModel) else model
    correct = 0
    regrets = []
    for s in test_samples:
        label = int(predict(s.features))
        correct += label == s.label
        regrets.append(s.time_of(label) / s.best_time)
    regrets = np.array(regrets)
    return {
        "accuracy": correct / len(test_samples),
        "mean_regret": float(regrets.mean()),
        "p90_regret": float(np.percentile(regrets, 90)),
        "n": len(test_samples),
    }


# --------------------------------------------------------------------------
# strategy comparison


@dataclass
class BenchCase:
    name: str
    tensor: DenseTensor
    ranks: tuple


def random_cases(count: int, dim_range=(10, 200), order: int = 3, seed: int = 0,
                 rank_min: int = 10, rank_frac: float = 0.5) -> list:
    rng = np.random.default_rng(seed)
    lo, hi = dim_range
    cases = []
    for i in range(count):
        dims = tuple(int(d) for d in rng.integers(lo, hi + 1, size=order))
        ranks = draw_ranks(dims, rng, rank_min, rank_frac)
        cases.append(BenchCase(f"random{i}", random_tensor(dims, int(rng.integers(2**31))), ranks))
    return cases


@dataclass
class BenchReport:
    rows: list
    aggregate: dict
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "rows": self.rows,
            "aggregate": self.aggregate,
            "notes": self.notes,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "dims", "ranks", "strategy", "total_time_s",
                        "relative_error", "solvers", "failed"])
            for r in self.rows:
                w.writerow([
                    r["case"], _shape_str(r["dims"]), _shape_str(r["ranks"]), r["strategy"],
                    "" if r["total_time"] is None else repr(r["total_time"]),
                    "" if r["relative_error"] is None else repr(r["relative_error"]),
                    ",".join(m["solver_used"] for m in r["modes"]), int(r["failed"]),
                ])


def _aggregate(rows: list, labels: list) -> dict:
    times: dict = {}
    for r in rows:
        if not r["failed"]:
            times.setdefault(r["case"], {})[r["strategy"]] = r["total_time"]
    fixed = [s for s in ("eig", "als") if s in labels] or list(labels)
    speedup = {}
    for s in labels:
        speedup[s] = {}
        for f in fixed:
            ratios = [t[f] / t[s] for t in times.values() if f in t and s in t]
            if ratios:
                speedup[s][f] = {
                    "mean": float(np.mean(ratios)),
                    "geomean": float(np.exp(np.mean(np.log(ratios)))),
                    "min": float(np.min(ratios)),
                    "max": float(np.max(ratios)),
                }
    within = {}
    for s in labels:
        hits = [t[s] <= 1.1 * min(t[f] for f in fixed) for t in times.values()
                if s in t and all(f in t for f in fixed)]
        within[s] = float(np.mean(hits)) if hits else None
    agg = {
        "cases": len({r["case"] for r in rows}),
        "failed_rows": sum(r["failed"] for r in rows),
        "speedup": speedup,
        "within_10pct_of_best_fixed": within,
        "fixed_baselines": fixed,
    }
    if "adaptive" in labels and {"eig", "als"} <= set(labels):
        overhead = {r["case"]: r["selector_time"] for r in rows
                    if r["strategy"] == "adaptive" and not r["failed"]}
        agg["adaptive_slower_than_both_fixed"] = sum(
            1 for c, t in times.items()
            if {"adaptive", "eig", "als"} <= t.keys()
            and t["adaptive"] > 1.05 * min(t["eig"], t["als"]) + overhead.get(c, 0.0)
        )
    return agg


def bench_compare(
    cases: Sequence[BenchCase],
    strategies: Union[Sequence[Strategy], Mapping[str, Strategy]],
    opts: AlsOptions = AlsOptions(),
    repeats: int = 3,
    notes: Optional[list] = None,
) -> BenchReport:
    """Run every strategy on every case; times are medians of ``repeats`` runs."""
    if isinstance(strategies, Mapping):
        named = list(strategies.items())
    else:
        named = [(s.name, s) for s in strategies]
    if not named:
        raise ValueError("no strategies to compare")
    rows = []
    for case in cases:
        try:
            sthosvd(case.tensor, case.ranks, named[0][1], opts)  # warm-up
        except TuckerError:
            pass
        for label, strategy in named:
            row = {"case": case.name, "dims": list(case.tensor.dims), "ranks": list(case.ranks),
                   "strategy": label, "total_time": None, "relative_error": None,
                   "selector_time": None, "modes": [], "failed": False, "error": None}
            try:
                times = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    T, reports = sthosvd(case.tensor, case.ranks, strategy, opts)
                    times.append(time.perf_counter() - t0)
                row["total_time"] = statistics.median(times)
                row["relative_error"] = relative_error(case.tensor, T)
                row["selector_time"] = sum(m.selector_decision_time for m in reports)
                row["modes"] = [m.to_dict() for m in reports]
            except (TuckerError, ValueError) as exc:
                log.warning("case %s with %s failed: %s", case.name, label, exc)
                row["failed"] = True
                row["error"] = str(exc)
            rows.append(row)
    return BenchReport(rows, _aggregate(rows, [l for l, _ in named]), list(notes or []))
