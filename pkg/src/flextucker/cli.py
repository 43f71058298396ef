"""Command-line interface.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric failure, 5 degenerate training data.
Only the documented payload goes to stdout; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from contextlib import nullcontext
from pathlib import Path

from . import __version__
from .driver import Strategy, parse_strategy, relative_error, reconstruct, sthosvd
from .errors import (
    EmptyDataset,
    FormatError,
    NumericalError,
    RankExceedsDim,
    ShapeMismatch,
    ZeroNormInput,
)
from .fileio import load_decomposition, read_dten, save_decomposition, write_dten
from .harness import (
    BenchCase,
    GenConfig,
    bench_compare,
    evaluate_model,
    generate_samples,
    random_cases,
    read_samples_csv,
    split_samples,
    write_samples_csv,
)
from .selector import load_model, save_model, train
from .solvers import AlsOptions
from .tensor import frobenius_norm, random_tensor, synth_lowrank

log = logging.getLogger("flextucker")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_DEGENERATE = 0, 2, 3, 4, 5
REPORT_SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _range(text: str) -> tuple:
    try:
        lo, hi = (int(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}: need 1 <= lo <= hi")
    return lo, hi


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _strategy_from_args(text: str, model_path, notes: list) -> Strategy:
    text = text.strip().lower()
    if text == "adaptive":
        if model_path is None:
            msg = "adaptive strategy without --model: falling back to costmodel"
            log.warning(msg)
            notes.append(msg)
            return Strategy.cost_model()
        return Strategy.adaptive(load_model(model_path))
    try:
        return parse_strategy(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_decompose(args) -> int:
    X = read_dten(args.input)
    if len(args.ranks) != X.order:
        raise UsageError(f"--ranks has {len(args.ranks)} entries but the tensor has order {X.order} "
                         f"(dims {'x'.join(map(str, X.dims))})")
    notes: list = []
    strategy = _strategy_from_args(args.strategy, args.model, notes)
    if strategy.kind == "manual" and len(strategy.choices) != X.order:
        raise UsageError(f"manual strategy lists {len(strategy.choices)} modes, tensor has order {X.order}")
    opts = AlsOptions(num_iters=args.als_iters, seed=args.seed)
    t0 = time.perf_counter()
    try:
        T, reports = sthosvd(X, args.ranks, strategy, opts)
    except RankExceedsDim as exc:
        raise UsageError(str(exc)) from exc
    total = time.perf_counter() - t0
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "input": str(args.input),
        "original_dims": list(X.dims),
        "ranks": list(T.ranks),
        "requested_strategy": args.strategy,
        "strategy": strategy.name,
        "als_iters": args.als_iters,
        "seed": args.seed,
        "total_time": total,
        "selector_overhead_s": sum(r.selector_decision_time for r in reports),
        "modes": [r.to_dict() for r in reports],
        "notes": notes,
    }
    if args.with_error:
        report["relative_error"] = relative_error(X, T)
    save_decomposition(args.output, T, {k: v for k, v in report.items() if k != "input"})
    if args.report:
        _write_json(args.report, report)
    return EXIT_OK


def _load_pair(args):
    X = read_dten(args.input)
    T, _ = load_decomposition(args.decomposition)
    if tuple(T.original_dims) != X.dims:
        raise UsageError(f"decomposition is for dims {tuple(T.original_dims)}, tensor has {X.dims}")
    return X, T


def cmd_error(args) -> int:
    X, T = _load_pair(args)
    try:
        err = relative_error(X, T)
    except ZeroNormInput as exc:
        raise UsageError(str(exc)) from exc
    print(f"{err:.6e}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    T, _ = load_decomposition(args.decomposition)
    write_dten(args.output, reconstruct(T))
    return EXIT_OK


def cmd_info(args) -> int:
    X = read_dten(args.input)
    print(f"order: {X.order}")
    print(f"dims: {'x'.join(map(str, X.dims))}")
    print(f"bytes: {X.nbytes}")
    print(f"frobenius_norm: {frobenius_norm(X):.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.ranks:
        if len(args.ranks) != len(args.dims):
            raise UsageError("--ranks and --dims must have the same length")
        try:
            X = synth_lowrank(args.dims, args.ranks, args.seed)
        except RankExceedsDim as exc:
            raise UsageError(str(exc)) from exc
    else:
        X = random_tensor(args.dims, args.seed, args.distribution)
    write_dten(args.output, X)
    return EXIT_OK


def cmd_gendata(args) -> int:
    try:
        cfg = GenConfig(sample_count=args.count, dim_range=args.dim_range, order=args.order,
                        seed=args.seed, memory_cap=args.memory_cap, repeats=args.repeats,
                        als_iters=args.als_iters)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = generate_samples(cfg)
    write_samples_csv(args.out, result.samples)
    log.info("gendata: %s", json.dumps(result.summary()))
    return EXIT_OK


def cmd_train(args) -> int:
    samples = read_samples_csv(args.samples)
    if args.exclude_ties:
        samples = [s for s in samples if not s.tie]
    if not samples:
        raise UsageError("no usable samples in the CSV")
    try:
        train_set, test_set = split_samples(samples, args.split, args.seed)
    except (ValueError, EmptyDataset) as exc:
        raise UsageError(str(exc)) from exc
    if not train_set or not test_set:
        raise UsageError(f"split {args.split} of {len(samples)} samples leaves an empty part")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train(train_set, max_depth_grid=range(args.max_depth_grid[0], args.max_depth_grid[1] + 1),
                      cv_folds=args.cv, seed=args.seed)
    save_model(model, args.out)
    ev = evaluate_model(model, test_set)
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "accuracy": ev["accuracy"],
        "mean_regret": ev["mean_regret"],
        "p90_regret": ev["p90_regret"],
        "n_train": len(train_set),
        "n_test": ev["n"],
        "max_depth": model.metadata.get("max_depth"),
        "class_weight": model.metadata.get("class_weight"),
        "cv_accuracy": model.metadata.get("cv_accuracy"),
        "degenerate": bool(model.metadata.get("degenerate")),
    }
    if args.eval_report:
        _write_json(args.eval_report, doc)
    if doc["degenerate"]:
        log.warning("training data has a single class; wrote a constant model")
        return EXIT_DEGENERATE
    return EXIT_OK


def _bench_cases(cases_path) -> list:
    doc = json.loads(Path(cases_path).read_text())
    base = Path(cases_path).parent
    cases = []
    rnd = doc.get("random")
    if rnd:
        cases += random_cases(int(rnd.get("count", 10)), tuple(rnd.get("dim_range", (10, 200))),
                              int(rnd.get("order", 3)), int(rnd.get("seed", 0)))
    for i, c in enumerate(doc.get("cases", [])):
        name = c.get("name", f"case{i}")
        if "path" in c:
            X = read_dten(base / c["path"])
        elif "lowrank" in c:
            X = synth_lowrank(c["dims"], c["lowrank"], c.get("seed", 0))
        else:
            X = random_tensor(c["dims"], c.get("seed", 0), c.get("distribution", "uniform"))
        ranks = tuple(int(r) for r in c["ranks"])
        if len(ranks) != X.order:
            raise UsageError(f"case {name}: {len(ranks)} ranks for an order-{X.order} tensor")
        cases.append(BenchCase(name, X, ranks))
    if not cases:
        raise UsageError("tensor list has no cases")
    return cases


def cmd_bench(args) -> int:
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not names:
        raise UsageError("--strategies is empty")
    notes: list = []
    strategies = {}
    for name in names:
        strategies[name.lower()] = _strategy_from_args(name, args.model, notes)
    cases = _bench_cases(args.tensors)
    report = bench_compare(cases, strategies, AlsOptions(num_iters=args.als_iters, seed=args.seed),
                           repeats=args.repeats, notes=notes)
    report.write_json(args.out)
    if args.csv:
        report.write_csv(args.csv)
    if all(r["failed"] for r in report.rows):
        log.error("every benchmark case failed")
        return EXIT_NUMERIC
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flextucker", description="Mode-wise adaptive Tucker decomposition")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="st-HOSVD of a .dten tensor")
    d.add_argument("--input", required=True)
    d.add_argument("--ranks", required=True, type=_int_list)
    d.add_argument("--strategy", default="costmodel",
                   help="adaptive|costmodel|eig|als|svd|manual:e,a,...")
    d.add_argument("--model")
    d.add_argument("--als-iters", type=int, default=5)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--output", required=True)
    d.add_argument("--report")
    d.add_argument("--with-error", action="store_true")
    d.set_defaults(func=cmd_decompose)

    e = sub.add_parser("error", help="relative reconstruction error")
    e.add_argument("--input", required=True)
    e.add_argument("--decomposition", required=True)
    e.set_defaults(func=cmd_error)

    r = sub.add_parser("reconstruct", help="expand a .tucker container to .dten")
    r.add_argument("--decomposition", required=True)
    r.add_argument("--output", required=True)
    r.set_defaults(func=cmd_reconstruct)

    i = sub.add_parser("info", help="describe a .dten file")
    i.add_argument("--input", required=True)
    i.set_defaults(func=cmd_info)

    s = sub.add_parser("synth", help="write a random or exact low-rank .dten tensor")
    s.add_argument("--dims", required=True, type=_int_list)
    s.add_argument("--ranks", type=_int_list)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--distribution", choices=("uniform", "normal"), default="uniform")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("gendata", help="benchmark both solvers per mode into a sample CSV")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--dim-range", type=_range, default=(10, 200))
    g.add_argument("--order", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--memory-cap", type=int, default=1 << 30)
    g.add_argument("--repeats", type=int, default=3)
    g.add_argument("--als-iters", type=int, default=5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gendata)

    t = sub.add_parser("train", help="fit the solver-selection tree")
    t.add_argument("--samples", required=True)
    t.add_argument("--split", type=float, default=0.7)
    t.add_argument("--max-depth-grid", type=_range, default=(1, 10))
    t.add_argument("--cv", type=int, default=5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--exclude-ties", action="store_true")
    t.add_argument("--out", required=True)
    t.add_argument("--eval-report")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="compare strategies on a set of tensors")
    b.add_argument("--tensors", required=True)
    b.add_argument("--strategies", required=True)
    b.add_argument("--model")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--als-iters", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bench)
    return p


def _thread_limit():
    value = os.environ.get("ATUCKER_THREADS", "0").strip() or "0"
    try:
        n = int(value)
    except ValueError:
        log.warning("ignoring non-integer ATUCKER_THREADS=%r", value)
        return nullcontext()
    if n <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ShapeMismatch, RankExceedsDim) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, EmptyDataset) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # malformed CSV/JSON content reaches here
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
