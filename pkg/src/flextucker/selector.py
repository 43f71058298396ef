"""Per-mode solver selection: shape features, flop-cost model and a CART tree.

Labels follow the solver codes: 0 picks the eigendecomposition solver and
1 the ALS solver.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyDataset, FeatureVersionMismatch, SchemaMismatch
from .solvers import Solver

__all__ = [
    "FEATURE_NAMES",
    "FEATURE_ORDER_VERSION",
    "extract_features",
    "CostModelParams",
    "cost_eig",
    "cost_als",
    "heuristic_choice",
    "TrainingSample",
    "TreeNode",
    "DecisionTreeModel",
    "predict",
    "constant_model",
    "fit_tree",
    "cross_val_accuracy",
    "train",
    "train_arrays",
    "model_to_json",
    "model_from_json",
    "save_model",
    "load_model",
]

FEATURE_NAMES = ("I", "R", "J", "I*I", "R*R", "I*R", "R*R/I", "R*R/J", "I/J", "R/J")
FEATURE_ORDER_VERSION = 1
MODEL_FORMAT_VERSION = 1


def extract_features(I: float, R: float, J: float) -> np.ndarray:
    I, R, J = float(I), float(R), float(J)
    return np.array([I, R, J, I * I, R * R, I * R, R * R / I, R * R / J, I / J, R / J])


# --------------------------------------------------------------------------
# flop-cost model


@dataclass(frozen=True)
class CostModelParams:
    """Dense-factorization flop estimates used by the cost model.

    ``f_eig(I) = eig_coef * I**3``, ``f_inv(R) = inv_coef * R**3`` and
    ``f_qr(I, R) = 2*I*R**2 - (2/3)*R**3`` (Householder QR).
    """

    num_iters: int = 5
    eig_coef: float = 9.0
    inv_coef: float = 2.0

    def f_eig(self, I: float) -> float:
        return self.eig_coef * I**3

    def f_inv(self, R: float) -> float:
        return self.inv_coef * R**3

    def f_qr(self, I: float, R: float) -> float:
        return 2.0 * I * R * R - (2.0 / 3.0) * R**3


DEFAULT_COSTS = CostModelParams()


def cost_eig(I, R, J, params: CostModelParams = DEFAULT_COSTS) -> float:
    I, R, J = float(I), float(R), float(J)
    return I * I * J + 2 * I * R * J + params.f_eig(I)


def cost_als(I, R, J, params: CostModelParams = DEFAULT_COSTS) -> float:
    I, R, J = float(I), float(R), float(J)
    ttm = 2 * I * J * R + 2 * J * R * R
    ttt = 2 * I * J * R + 2 * J * R * R
    per_iter = ttm + ttt + 4 * I * R * R + 2 * params.f_inv(R)
    return per_iter * params.num_iters + 2 * J * R * R + params.f_qr(I, R)


def heuristic_choice(I, R, J, params: CostModelParams = DEFAULT_COSTS) -> Solver:
    return Solver.EIG if cost_eig(I, R, J, params) <= cost_als(I, R, J, params) else Solver.ALS


# --------------------------------------------------------------------------
# samples and trees


@dataclass
class TrainingSample:
    features: np.ndarray
    time_eig: float
    time_als: float
    label: int
    tie: bool = False
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_times(cls, I, R, J, time_eig, time_als, tie_band=0.05, **provenance):
        return cls(
            extract_features(I, R, J),
            float(time_eig),
            float(time_als),
            0 if time_eig <= time_als else 1,
            abs(time_eig - time_als) < tie_band * min(time_eig, time_als),
            provenance,
        )

    @property
    def best_time(self) -> float:
        return min(self.time_eig, self.time_als)

    def time_of(self, label: int) -> float:
        return self.time_als if int(label) == 1 else self.time_eig


@dataclass(frozen=True)
class TreeNode:
    feature_index: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None
    label: Optional[int] = None
    class_counts: Optional[tuple] = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


@dataclass
class DecisionTreeModel:
    nodes: list
    root: int = 0
    hyper: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.metadata.setdefault("feature_order_version", FEATURE_ORDER_VERSION)
        self.validate()

    @property
    def depth(self) -> int:
        def walk(i):
            node = self.nodes[i]
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def validate(self) -> None:
        n = len(self.nodes)
        if not 0 <= self.root < n:
            raise SchemaMismatch("root id does not name a node")
        seen = set()
        stack = [(self.root, 0)]
        while stack:
            i, d = stack.pop()
            if i in seen:
                raise SchemaMismatch("tree contains a cycle or shared node")
            seen.add(i)
            node = self.nodes[i]
            if node.is_leaf:
                if node.label not in (0, 1):
                    raise SchemaMismatch(f"leaf {i} has label {node.label}")
                continue
            if node.feature_index is None or not 0 <= node.feature_index < len(FEATURE_NAMES):
                raise SchemaMismatch(f"node {i} has an invalid feature index")
            for child in (node.left, node.right):
                if child is None or not 0 <= child < n:
                    raise SchemaMismatch(f"node {i} references a missing child")
                stack.append((child, d + 1))
        if seen != set(range(n)):
            raise SchemaMismatch("tree has unreachable nodes")
        max_depth = self.metadata.get("max_depth")
        if max_depth is not None and self.depth > max_depth:
            raise SchemaMismatch("tree is deeper than its recorded max_depth")

    def predict_label(self, f) -> int:
        node = self.nodes[self.root]
        nodes = self.nodes
        while node.label is None:
            node = nodes[node.left if f[node.feature_index] <= node.threshold else node.right]
        return node.label


def predict(model: DecisionTreeModel, f) -> Solver:
    if model.metadata.get("feature_order_version") != FEATURE_ORDER_VERSION:
        raise FeatureVersionMismatch(
            f"model uses feature order {model.metadata.get('feature_order_version')}, "
            f"expected {FEATURE_ORDER_VERSION}"
        )
    return Solver(model.predict_label(f))


def constant_model(label: int, counts=(0, 0), **metadata) -> DecisionTreeModel:
    metadata.setdefault("max_depth", 0)
    return DecisionTreeModel([TreeNode(label=int(label), class_counts=tuple(counts))], 0, {}, metadata)


# --------------------------------------------------------------------------
# CART training


def _class_weights(y: np.ndarray, mode: str) -> np.ndarray:
    if mode == "uniform":
        return np.ones(y.size)
    if mode == "balanced":
        counts = np.bincount(y, minlength=2).astype(float)
        per_class = np.divide(y.size, 2 * counts, out=np.zeros(2), where=counts > 0)
        return per_class[y]
    raise ValueError(f"unknown class weight {mode!r}")


def _best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Lowest weighted Gini split; ties go to the smallest feature, then threshold."""
    best = None
    best_score = -np.inf
    total_w = w.sum()
    total_w1 = w[y == 1].sum()
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = np.nonzero(xs[:-1] < xs[1:])[0]
        if valid.size == 0:
            continue
        ws = w[order]
        cw = np.cumsum(ws)[valid]
        cw1 = np.cumsum(ws * (y[order] == 1))[valid]
        cw0 = cw - cw1
        rw, rw1 = total_w - cw, total_w1 - cw1
        rw0 = rw - rw1
        # maximizing this equals minimizing W_L*gini_L + W_R*gini_R
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(cw > 0, (cw0**2 + cw1**2) / cw, 0.0) + np.where(
                rw > 0, (rw0**2 + rw1**2) / rw, 0.0
            )
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score = score[i]
            lo, hi = xs[valid[i]], xs[valid[i] + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best = (f, float(thr))
    return best


def fit_tree(X, y, max_depth: int, class_weight: str = "uniform") -> list:
    """Grow a CART classification tree and return its node list (root first)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = _class_weights(y, class_weight)
    nodes: list = []

    def grow(idx: np.ndarray, depth: int) -> int:
        yi, wi = y[idx], w[idx]
        counts = (int(np.sum(yi == 0)), int(np.sum(yi == 1)))
        w1 = wi[yi == 1].sum()
        w0 = wi.sum() - w1
        label = 1 if w1 > w0 else 0
        slot = len(nodes)
        nodes.append(None)
        split = None
        if depth < max_depth and counts[0] and counts[1]:
            split = _best_split(X[idx], yi, wi)
        if split is None:
            nodes[slot] = TreeNode(label=label, class_counts=counts)
            return slot
        f, thr = split
        go_left = X[idx, f] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        nodes[slot] = TreeNode(f, thr, left, right)
        return slot

    grow(np.arange(y.size), 0)
    return nodes


def _tree_predict(nodes: list, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.int64)
    for i, row in enumerate(X):
        node = nodes[0]
        while node.label is None:
            node = nodes[node.left if row[node.feature_index] <= node.threshold else node.right]
        out[i] = node.label
    return out


def _stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> list:
    folds = [[] for _ in range(k)]
    offset = 0
    for c in (0, 1):
        idx = rng.permutation(np.nonzero(y == c)[0])
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(i)
        offset += idx.size
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds if f]


def cross_val_accuracy(X, y, max_depth: int, class_weight: str, folds: list) -> float:
    """Pooled held-out accuracy over the given test folds."""
    correct = 0
    total = 0
    all_idx = np.arange(y.size)
    for test in folds:
        train_idx = np.setdiff1d(all_idx, test, assume_unique=True)
        if train_idx.size == 0:
            continue
        nodes = fit_tree(X[train_idx], y[train_idx], max_depth, class_weight)
        correct += int(np.sum(_tree_predict(nodes, X[test]) == y[test]))
        total += test.size
    return correct / total if total else 0.0


def train_arrays(
    X,
    y,
    *,
    max_depth_grid: Sequence[int] = range(1, 11),
    cv_folds: int = 5,
    class_weights: Sequence[str] = ("uniform", "balanced"),
    seed: int = 0,
) -> DecisionTreeModel:
    """Grid search over depth and class weighting by k-fold CV, then refit on all data."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise EmptyDataset("no training samples")
    if X.ndim != 2 or X.shape != (y.size, len(FEATURE_NAMES)):
        raise ValueError(f"feature matrix must be n x {len(FEATURE_NAMES)}")
    counts = np.bincount(y, minlength=2)
    hyper = {
        "max_depth_grid": [int(d) for d in max_depth_grid],
        "cv_folds": int(cv_folds),
        "class_weight": list(class_weights),
        "seed": int(seed),
    }
    if counts.min() == 0 or y.size < 2:
        warnings.warn("training data holds a single class; returning a constant tree")
        label = int(np.argmax(counts))
        model = constant_model(label, tuple(int(c) for c in counts),
                               train_accuracy=1.0, cv_accuracy=1.0, degenerate=True,
                               class_weight="uniform", n_samples=int(y.size))
        model.hyper = hyper
        return model

    rng = np.random.default_rng(seed)
    folds = _stratified_folds(y, max(2, min(int(cv_folds), y.size)), rng)
    best = None
    for depth, cw in product(max_depth_grid, class_weights):
        score = cross_val_accuracy(X, y, depth, cw, folds)
        if best is None or score > best[0]:
            best = (score, int(depth), cw)
    score, depth, cw = best
    nodes = fit_tree(X, y, depth, cw)
    train_acc = float(np.mean(_tree_predict(nodes, X) == y))
    metadata = {
        "max_depth": depth,
        "class_weight": cw,
        "cv_accuracy": float(score),
        "train_accuracy": train_acc,
        "degenerate": False,
        "n_samples": int(y.size),
    }
    return DecisionTreeModel(nodes, 0, hyper, metadata)


def train(samples: Sequence[TrainingSample], **hyper) -> DecisionTreeModel:
    if len(samples) == 0:
        raise EmptyDataset("no training samples")
    X = np.vstack([s.features for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return train_arrays(X, y, **hyper)


# --------------------------------------------------------------------------
# persistence


def _node_json(i: int, node: TreeNode) -> dict:
    if node.is_leaf:
        return {"id": i, "label": int(node.label), "class_counts": [int(c) for c in node.class_counts]}
    return {
        "id": i,
        "feature_index": int(node.feature_index),
        "threshold": float(node.threshold),
        "left": int(node.left),
        "right": int(node.right),
    }


def model_to_json(model: DecisionTreeModel) -> str:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "feature_order": list(FEATURE_NAMES),
        "hyper": model.hyper,
        "nodes": [_node_json(i, n) for i, n in enumerate(model.nodes)],
        "root": int(model.root),
        "metadata": model.metadata,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def model_from_json(text: str) -> DecisionTreeModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"model file is not valid JSON: {exc}") from exc
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise SchemaMismatch(f"unsupported model format version {doc.get('version')!r}")
    if doc.get("feature_order") != list(FEATURE_NAMES):
        raise SchemaMismatch("model feature order does not match this build")
    metadata = dict(doc.get("metadata", {}))
    if metadata.get("feature_order_version") != FEATURE_ORDER_VERSION:
        raise SchemaMismatch(
            f"unsupported feature_order_version {metadata.get('feature_order_version')!r}"
        )
    try:
        entries = sorted(doc["nodes"], key=lambda e: e["id"])
        if [e["id"] for e in entries] != list(range(len(entries))):
            raise SchemaMismatch("node ids must be 0..n-1")
        nodes = []
        for e in entries:
            if "label" in e:
                nodes.append(TreeNode(label=int(e["label"]), class_counts=tuple(e["class_counts"])))
            else:
                nodes.append(TreeNode(int(e["feature_index"]), float(e["threshold"]),
                                      int(e["left"]), int(e["right"])))
        return DecisionTreeModel(nodes, int(doc["root"]), doc.get("hyper", {}), metadata)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaMismatch):
            raise
        raise SchemaMismatch(f"malformed model file: {exc}") from exc


def save_model(model: DecisionTreeModel, path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path) -> DecisionTreeModel:
    return model_from_json(Path(path).read_text())
