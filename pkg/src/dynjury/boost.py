"""Gradient-boosted decision trees for binary reliability classification.

Logistic loss, Newton leaf values -G/(H + lambda) with shrinkage, exact
greedy split search over sorted unique feature values (midpoint
thresholds). Small data by design: no histograms, no subsampling, no
early stopping.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_EPS = 1e-15
BASE_RATE_CLAMP = 1e-6

# Production search space for the reliability models; tests use smaller
# round counts.
DEFAULT_GRID = {
    "max_depth": (2, 3, 4, 5, 6, 7, 8, 9),
    "learning_rate": (0.01, 0.03, 0.05, 0.07, 0.1, 0.2),
    "n_estimators": (500, 600, 800, 1000, 1200),
}


class BoostError(ValueError):
    pass


@dataclass(frozen=True)
class BoostParams:
    max_depth: int = 6
    learning_rate: float = 0.1
    n_estimators: int = 500
    l2_lambda: float = 1.0
    min_child_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.max_depth < 1 or self.n_estimators < 0:
            raise BoostError(f"invalid params {self}")
        if self.learning_rate <= 0 or self.l2_lambda < 0 or self.min_child_weight < 0:
            raise BoostError(f"invalid params {self}")

    def to_json(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "n_estimators": self.n_estimators,
            "l2_lambda": self.l2_lambda,
            "min_child_weight": self.min_child_weight,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoostParams":
        return cls(**obj)


@dataclass(frozen=True)
class ParamGrid:
    max_depth: tuple[int, ...] = DEFAULT_GRID["max_depth"]
    learning_rate: tuple[float, ...] = DEFAULT_GRID["learning_rate"]
    n_estimators: tuple[int, ...] = DEFAULT_GRID["n_estimators"]
    l2_lambda: tuple[float, ...] = (1.0,)
    min_child_weight: tuple[float, ...] = (1.0,)

    def sample(self, rng: random.Random) -> BoostParams:
        return BoostParams(
            max_depth=rng.choice(self.max_depth),
            learning_rate=rng.choice(self.learning_rate),
            n_estimators=rng.choice(self.n_estimators),
            l2_lambda=rng.choice(self.l2_lambda),
            min_child_weight=rng.choice(self.min_child_weight),
        )

    def to_json(self) -> dict:
        return {
            "max_depth": list(self.max_depth),
            "learning_rate": list(self.learning_rate),
            "n_estimators": list(self.n_estimators),
            "l2_lambda": list(self.l2_lambda),
            "min_child_weight": list(self.min_child_weight),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParamGrid":
        return cls(**{k: tuple(v) for k, v in obj.items()})


class Tree:
    """Flat node arrays; node 0 is the root, feature -1 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_leaf(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def add_internal(self, feature: int, threshold: float) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        stack: list[tuple[int, np.ndarray]] = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if self.feature[node] < 0:
                out[rows] = self.value[node]
                continue
            mask = X[rows, self.feature[node]] < self.threshold[node]
            stack.append((self.left[node], rows[mask]))
            stack.append((self.right[node], rows[~mask]))
        return out

    def to_json(self) -> dict:
        nodes = []
        for i in range(len(self.feature)):
            if self.feature[i] < 0:
                nodes.append({"leaf": self.value[i]})
            else:
                nodes.append(
                    {
                        "f": self.feature[i],
                        "t": self.threshold[i],
                        "l": self.left[i],
                        "r": self.right[i],
                    }
                )
        return {"nodes": nodes}

    @classmethod
    def from_json(cls, obj: dict) -> "Tree":
        tree = cls()
        for node in obj["nodes"]:
            if "leaf" in node:
                tree.add_leaf(float(node["leaf"]))
            else:
                idx = tree.add_internal(int(node["f"]), float(node["t"]))
                tree.left[idx] = int(node["l"])
                tree.right[idx] = int(node["r"])
        return tree


@dataclass
class BoostedModel:
    base_score: float
    trees: list[Tree]
    params: BoostParams
    feature_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)
    warning: str | None = None
    training_logloss: list[float] = field(default_factory=list, repr=False)

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.feature_names):
            raise BoostError(
                f"feature width {X.shape[1]} does not match model width {len(self.feature_names)}"
            )
        margin = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            margin += tree.predict_matrix(X)
        return margin

    def predict_proba_matrix(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_margin(X))

    def to_json(self) -> dict:
        return {
            "metadata": self.metadata,
            "params": self.params.to_json(),
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "trees": [t.to_json() for t in self.trees],
            "warning": self.warning,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoostedModel":
        return cls(
            base_score=float(obj["base_score"]),
            trees=[Tree.from_json(t) for t in obj["trees"]],
            params=BoostParams.from_json(obj["params"]),
            feature_names=tuple(obj["feature_names"]),
            metadata=obj.get("metadata") or {},
            warning=obj.get("warning"),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "BoostedModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.clip(z, -500.0, 500.0)
    p = 1.0 / (1.0 + np.exp(-z))
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def _logloss(y: np.ndarray, p: np.ndarray) -> float:
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _best_split(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, lam: float, min_child_weight: float
):
    """Maximal-gain (feature, threshold) over all sorted-unique midpoints.

    Returns (gain, feature, threshold) or None. Ties resolve to the lowest
    feature index, then the lowest threshold.
    """
    m, d = X.shape
    if m < 2:
        return None
    order = np.argsort(X, axis=0)
    xs = np.take_along_axis(X, order, axis=0)
    g_cum = np.cumsum(g[order], axis=0)
    h_cum = np.cumsum(h[order], axis=0)
    g_tot = g_cum[-1]
    h_tot = h_cum[-1]

    gl = g_cum[:-1]
    hl = h_cum[:-1]
    gr = g_tot - gl
    hr = h_tot - hl
    parent = g_tot**2 / (h_tot + lam)
    gain = 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - parent)
    valid = (xs[:-1] < xs[1:]) & (hl >= min_child_weight) & (hr >= min_child_weight)
    gain = np.where(valid, gain, -np.inf)

    # feature-major scan: first max is lowest feature, then lowest threshold
    flat = gain.T.reshape(-1)
    best = int(np.argmax(flat))
    best_gain = float(flat[best])
    if not np.isfinite(best_gain):
        return None
    feature = best // (m - 1)
    pos = best % (m - 1)
    threshold = 0.5 * (float(xs[pos, feature]) + float(xs[pos + 1, feature]))
    return best_gain, feature, threshold


def _fit_tree(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, params: BoostParams
) -> Tree:
    tree = Tree()
    lam = params.l2_lambda
    lr = params.learning_rate

    def build(rows: np.ndarray, depth: int) -> int:
        g_sum = float(g[rows].sum())
        h_sum = float(h[rows].sum())
        leaf_value = -g_sum / (h_sum + lam) * lr
        if depth >= params.max_depth or rows.size < 2 or h_sum < params.min_child_weight:
            return tree.add_leaf(leaf_value)
        found = _best_split(X[rows], g[rows], h[rows], lam, params.min_child_weight)
        if found is None or found[0] <= 0.0:
            return tree.add_leaf(leaf_value)
        _, feature, threshold = found
        node = tree.add_internal(feature, threshold)
        mask = X[rows, feature] < threshold
        tree.left[node] = build(rows[mask], depth + 1)
        tree.right[node] = build(rows[~mask], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return tree


def train(
    features: np.ndarray,
    labels: Sequence[int],
    params: BoostParams,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    metadata: dict | None = None,
) -> BoostedModel:
    """Fit the boosted classifier. `seed` is accepted for interface parity;
    the exact greedy procedure is deterministic without it."""
    del seed
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise BoostError(f"bad shapes: X {X.shape}, y {y.shape}")
    if X.shape[0] < 2:
        raise BoostError("need at least 2 rows")
    if np.isnan(X).any():
        raise BoostError("features contain NaN")
    if not np.isin(y, (0.0, 1.0)).all():
        raise BoostError("labels must be 0/1")
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"f{i}" for i in range(X.shape[1])
    )
    if len(names) != X.shape[1]:
        raise BoostError("feature_names length must match matrix width")

    base_rate = float(np.clip(y.mean(), BASE_RATE_CLAMP, 1.0 - BASE_RATE_CLAMP))
    base_score = math.log(base_rate / (1.0 - base_rate))
    model = BoostedModel(
        base_score=base_score,
        trees=[],
        params=params,
        feature_names=names,
        metadata=metadata or {},
    )
    if y.min() == y.max():
        model.warning = "single-class labels; model reduces to the base rate"
        return model

    margin = np.full(X.shape[0], base_score)
    model.training_logloss.append(_logloss(y, _sigmoid(margin)))
    for _ in range(params.n_estimators):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        tree = _fit_tree(X, g, h, params)
        model.trees.append(tree)
        margin += tree.predict_matrix(X)
        model.training_logloss.append(_logloss(y, _sigmoid(margin)))
    return model


def predict_proba(model: BoostedModel, row) -> float:
    """Probability for a single row; FeatureVector names are validated."""
    values = row
    names = getattr(row, "names", None)
    if names is not None:
        if tuple(names) != model.feature_names:
            raise BoostError("feature names do not match the model")
        values = row.values
    arr = np.asarray(values, dtype=float).reshape(1, -1)
    return float(model.predict_proba_matrix(arr)[0])


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outranks a random negative (ties half)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise BoostError("AUC undefined: both classes must be present")
    ranks = _midranks(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _safe_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC, or 0.5 when one class is absent (uninformative fallback)."""
    try:
        return auc(scores, labels)
    except BoostError:
        return 0.5


def random_search(
    train_set: tuple[np.ndarray, np.ndarray],
    valid_set: tuple[np.ndarray, np.ndarray],
    grid: ParamGrid,
    trials: int = 20,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    metadata: dict | None = None,
) -> tuple[BoostParams, BoostedModel, float]:
    """Uniform random search over the grid; best validation AUC wins.

    Ties break toward fewer boosting rounds, then lower depth.
    """
    if trials < 1:
        raise BoostError("trials must be >= 1")
    rng = random.Random(seed)
    sampled: list[BoostParams] = []
    seen: set[BoostParams] = set()
    for _ in range(trials):
        candidate = grid.sample(rng)
        if candidate not in seen:
            seen.add(candidate)
            sampled.append(candidate)

    X_train, y_train = train_set
    X_valid, y_valid = valid_set
    best: tuple[float, int, int, int] | None = None
    best_model: BoostedModel | None = None
    best_params: BoostParams | None = None
    best_auc = 0.0
    for idx, params in enumerate(sampled):
        model = train(
            X_train, y_train, params, feature_names=feature_names, metadata=metadata
        )
        score = _safe_auc(model.predict_proba_matrix(np.asarray(X_valid, dtype=float)), np.asarray(y_valid))
        key = (-score, params.n_estimators, params.max_depth, idx)
        if best is None or key < best:
            best = key
            best_model = model
            best_params = params
            best_auc = score
    assert best_model is not None and best_params is not None
    return best_params, best_model, best_auc
