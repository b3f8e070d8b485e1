"""Rank statistics, significance tests, effect sizes, isotonic calibration,
permutation importance, and binned diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boost import BoostedModel, auc
from .util import derive_seed

WILCOXON_EXACT_LIMIT = 25


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TauResult:
    tau: float
    n: int
    variant: str = "tau_b"


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float((counts * (counts - 1) / 2).sum())


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> TauResult:
    """Tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)) with midpair tie corrections."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise StatsError("kendall_tau needs two equal-length vectors of length >= 2")
    n = len(x)
    n0 = n * (n - 1) / 2
    n1 = _tie_term(x)
    n2 = _tie_term(y)
    if n0 == n1 or n0 == n2:
        raise StatsError("tau undefined: a vector is entirely tied")
    s = 0.0
    for i in range(n - 1):
        s += float(np.sum(np.sign(x[i + 1 :] - x[i]) * np.sign(y[i + 1 :] - y[i])))
    return TauResult(tau=s / math.sqrt((n0 - n1) * (n0 - n2)), n=n)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # rank sum of positive differences (W+)
    p_one_sided: float
    n_effective: int
    method: str  # "exact" | "normal_approx"


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def signed_rank_distribution(ranks: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Exact null distribution of W+ for the given |difference| ranks.

    Midranks are multiples of 1/2, so doubling them makes integer support;
    the distribution is built by convolving one (0, 2r) coin per pair.
    """
    doubled = [int(round(2.0 * r)) for r in ranks]
    total = sum(doubled)
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    top = 0
    for r in doubled:
        nxt = counts.copy()
        nxt[r : top + r + 1] += counts[: top + 1]
        counts = nxt
        top += r
    probs = counts / (2.0 ** len(doubled))
    support = np.arange(total + 1) / 2.0
    return support, probs


def wilcoxon_one_sided(
    a: Sequence[float], b: Sequence[float], alternative: str = "a_greater"
) -> WilcoxonResult:
    """Paired signed-rank test of H1: a > b. Zero differences are dropped;
    ties get midranks; exact enumeration up to 25 effective pairs, normal
    approximation with continuity and tie corrections beyond."""
    if alternative != "a_greater":
        raise StatsError(f"unsupported alternative {alternative!r}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError("wilcoxon needs paired equal-length vectors")
    d = a - b
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        raise StatsError("no nonzero pairs")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= WILCOXON_EXACT_LIMIT:
        support, probs = signed_rank_distribution(ranks)
        # upper tail: P(W+ >= observed); support is exact so >= is safe with
        # a half-step tolerance
        p = float(probs[support >= w_plus - 0.25].sum())
        return WilcoxonResult(w_plus, min(p, 1.0), n, "exact")

    mu = n * (n + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    tie_correction = float((counts**3 - counts).sum()) / 48.0
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_correction
    if sigma2 <= 0:
        raise StatsError("degenerate variance in normal approximation")
    z = (w_plus - mu - 0.5) / math.sqrt(sigma2)
    p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return WilcoxonResult(w_plus, p, n, "normal_approx")


@dataclass(frozen=True)
class CliffsDelta:
    delta: float
    m: int
    n: int

    @property
    def magnitude(self) -> str:
        size = abs(self.delta)
        if size > 0.47:
            return "large"
        if size >= 0.33:
            return "medium"
        return "small"


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> CliffsDelta:
    """(#{a_i > b_j} - #{a_i < b_j}) / (m * n)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise StatsError("cliffs_delta needs nonempty groups")
    diff = a[:, None] - b[None, :]
    greater = int((diff > 0).sum())
    lesser = int((diff < 0).sum())
    return CliffsDelta(delta=(greater - lesser) / (len(a) * len(b)), m=len(a), n=len(b))


@dataclass(frozen=True)
class IsotonicMap:
    breakpoints: tuple[float, ...]  # strictly increasing x
    fitted: tuple[float, ...]  # non-decreasing fitted values

    @property
    def degenerate(self) -> bool:
        """All inputs map to a single value (NA convention in reports)."""
        return len(set(self.fitted)) <= 1

    def evaluate(self, value: float) -> float:
        return float(np.interp(value, self.breakpoints, self.fitted))

    def evaluate_many(self, values: Sequence[float]) -> np.ndarray:
        return np.interp(np.asarray(values, dtype=float), self.breakpoints, self.fitted)

    def to_json(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "fitted": list(self.fitted)}

    @classmethod
    def from_json(cls, obj: dict) -> "IsotonicMap":
        return cls(tuple(obj["breakpoints"]), tuple(obj["fitted"]))


def isotonic_fit(x: Sequence[float], y: Sequence[float]) -> IsotonicMap:
    """Least-squares monotone (non-decreasing) fit of y against x via
    pool-adjacent-violators; equal-x points are pre-averaged."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) == 0:
        raise StatsError("isotonic_fit needs equal-length nonempty vectors")
    xs, inverse = np.unique(x, return_inverse=True)
    means = np.zeros(len(xs))
    weights = np.zeros(len(xs))
    for idx, yi in zip(inverse, y):
        means[idx] += yi
        weights[idx] += 1.0
    means /= weights

    # blocks of (mean, weight, span); merge while out of order
    blocks: list[list[float]] = []
    for mean, weight in zip(means, weights):
        blocks.append([mean, weight, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2, s2 = blocks.pop()
            m1, w1, s1 = blocks.pop()
            w = w1 + w2
            blocks.append([(m1 * w1 + m2 * w2) / w, w, s1 + s2])
    fitted = np.empty(len(xs))
    pos = 0
    for mean, _, span in blocks:
        fitted[pos : pos + span] = mean
        pos += span
    return IsotonicMap(tuple(float(v) for v in xs), tuple(float(v) for v in fitted))


@dataclass(frozen=True)
class FeatureImportance:
    feature_names: tuple[str, ...]
    baseline: float
    mean_importance: np.ndarray
    std_importance: np.ndarray

    def top(self, k: int = 5) -> list[tuple[str, float, float]]:
        order = np.argsort(-self.mean_importance, kind="stable")[:k]
        return [
            (self.feature_names[i], float(self.mean_importance[i]), float(self.std_importance[i]))
            for i in order
        ]


def permutation_importance(
    model: BoostedModel,
    data: np.ndarray,
    labels: Sequence[int],
    metric: str = "auc",
    repeats: int = 5,
    seed: int = 0,
) -> FeatureImportance:
    """Mean metric drop when one column is shuffled; per-feature derived
    seeds keep the result independent of evaluation order."""
    if metric != "auc":
        raise StatsError(f"unsupported metric {metric!r}")
    X = np.asarray(data, dtype=float)
    y = np.asarray(labels)
    baseline = auc(model.predict_proba_matrix(X), y)
    means = np.zeros(X.shape[1])
    stds = np.zeros(X.shape[1])
    for f in range(X.shape[1]):
        rng = np.random.default_rng(derive_seed(seed, "permutation_importance", f))
        drops = np.empty(repeats)
        shuffled = X.copy()
        for rep in range(repeats):
            shuffled[:, f] = X[rng.permutation(X.shape[0]), f]
            drops[rep] = baseline - auc(model.predict_proba_matrix(shuffled), y)
        means[f] = drops.mean()
        stds[f] = drops.std()
    return FeatureImportance(
        feature_names=model.feature_names,
        baseline=baseline,
        mean_importance=means,
        std_importance=stds,
    )


@dataclass(frozen=True)
class BinStats:
    label: str
    count: int
    tau_by_judge: dict[str, float | None]  # None when tau is undefined
    selection_rate_by_judge: dict[str, float]
    selection_count_by_judge: dict[str, int]


@dataclass(frozen=True)
class BinAnalysis:
    feature_name: str
    edges: tuple[float, float]
    bins: tuple[BinStats, ...]


def bin_analysis(
    feature_values: Sequence[float],
    human_scores: Sequence[float],
    judge_scores: dict[str, Sequence[float]],
    selections: Sequence[Sequence[str]],
    feature_name: str = "",
    bins: str = "tertiles",
) -> BinAnalysis:
    """Per-tertile judge tau and jury selection frequency (low/medium/high)."""
    if bins != "tertiles":
        raise StatsError(f"unsupported binning {bins!r}")
    values = np.asarray(feature_values, dtype=float)
    human = np.asarray(human_scores, dtype=float)
    if values.min() == values.max():
        raise StatsError("degenerate binning: feature is constant")
    lo_edge, hi_edge = float(np.quantile(values, 1 / 3)), float(np.quantile(values, 2 / 3))
    assignments = np.where(values <= lo_edge, 0, np.where(values <= hi_edge, 1, 2))
    results = []
    for bin_idx, label in enumerate(("low", "medium", "high")):
        mask = assignments == bin_idx
        count = int(mask.sum())
        if count < 2:
            raise StatsError(f"bin {label!r} has {count} instances; need >= 2")
        taus: dict[str, float | None] = {}
        for judge, scores in judge_scores.items():
            try:
                taus[judge] = kendall_tau(np.asarray(scores, dtype=float)[mask], human[mask]).tau
            except StatsError:
                taus[judge] = None
        sel_counts = {judge: 0 for judge in judge_scores}
        for idx in np.flatnonzero(mask):
            for judge in selections[idx]:
                sel_counts[judge] += 1
        results.append(
            BinStats(
                label=label,
                count=count,
                tau_by_judge=taus,
                selection_rate_by_judge={j: c / count for j, c in sel_counts.items()},
                selection_count_by_judge=sel_counts,
            )
        )
    return BinAnalysis(feature_name=feature_name, edges=(lo_edge, hi_edge), bins=tuple(results))


@dataclass(frozen=True)
class GroupDiffRow:
    feature: str
    median_difference: float
    mean_difference: float


def group_feature_diff(
    feature_names: Sequence[str],
    features: np.ndarray,
    errors: Sequence[float],
    threshold: float,
) -> list[GroupDiffRow]:
    """Feature distribution gaps between high-error and low-error instances,
    ranked by absolute median difference."""
    X = np.asarray(features, dtype=float)
    err = np.asarray(errors, dtype=float)
    high = err > threshold
    low = ~high
    if not high.any() or not low.any():
        raise StatsError("both error groups must be nonempty")
    rows = []
    for idx, name in enumerate(feature_names):
        hi_col = X[high, idx]
        lo_col = X[low, idx]
        rows.append(
            GroupDiffRow(
                feature=name,
                median_difference=abs(float(np.median(hi_col)) - float(np.median(lo_col))),
                mean_difference=abs(float(hi_col.mean()) - float(lo_col.mean())),
            )
        )
    rows.sort(key=lambda r: (-r.median_difference, r.feature))
    return rows
