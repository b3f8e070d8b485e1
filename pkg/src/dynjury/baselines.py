"""Static-jury baselines and the single-judge baseline, all consuming the
same normalized scores as the dynamic jury for a fair comparison."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Instance
from .stats import StatsError, kendall_tau

REGRESSION_RIDGE = 1e-8


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class StaticJurySpec:
    kind: str  # average_all | average_top_k | weighted_regression | weighted_tau
    pool: tuple[str, ...]
    parameters: dict = field(default_factory=dict)
    fitted_on: str = ""

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "pool": list(self.pool),
            "parameters": self.parameters,
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StaticJurySpec":
        return cls(
            kind=obj["kind"],
            pool=tuple(obj["pool"]),
            parameters=dict(obj.get("parameters") or {}),
            fitted_on=obj.get("fitted_on", ""),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))


def _score_matrix(instances: Sequence[Instance], pool: Sequence[str]) -> np.ndarray:
    rows = np.empty((len(instances), len(pool)))
    for i, inst in enumerate(instances):
        for j, judge in enumerate(pool):
            rows[i, j] = inst.judge_normalized(judge)
    return rows


def average_all(instance: Instance, pool: Sequence[str]) -> float:
    """Plain mean of the pool's normalized scores."""
    scores = [instance.judge_normalized(j) for j in pool]
    return float(np.mean(scores))


def single_judge(instance: Instance, judge_id: str) -> float:
    return instance.judge_normalized(judge_id)


def per_judge_taus(instances: Sequence[Instance], pool: Sequence[str]) -> dict[str, float]:
    """Each judge's Kendall tau against human scores; 0.0 when undefined."""
    human = np.array([inst.human_normalized for inst in instances])
    taus = {}
    for judge in pool:
        scores = np.array([inst.judge_normalized(judge) for inst in instances])
        try:
            taus[judge] = kendall_tau(scores, human).tau
        except StatsError:
            taus[judge] = 0.0
    return taus


def fit_average_top_k(
    valid_instances: Sequence[Instance],
    pool: Sequence[str],
    K_range: Sequence[int] | None = None,
    fitted_on: str = "",
) -> StaticJurySpec:
    """Rank judges by validation tau; pick the K whose top-K simple average
    maximizes validation tau (ties to the smaller K)."""
    if not valid_instances:
        raise BaselineError("validation set is empty")
    pool = tuple(pool)
    if K_range is None:
        K_range = range(2, len(pool))
    K_range = sorted(K_range)
    if not K_range:
        raise BaselineError("K range empty")
    taus = per_judge_taus(valid_instances, pool)
    # stable ranking: higher tau first, pool order on ties
    ranking = sorted(pool, key=lambda j: (-taus[j], pool.index(j)))
    human = np.array([inst.human_normalized for inst in valid_instances])
    scores = _score_matrix(valid_instances, ranking)
    best_k, best_tau = None, None
    for k in K_range:
        if k > len(pool):
            continue
        mean_scores = scores[:, :k].mean(axis=1)
        try:
            tau = kendall_tau(mean_scores, human).tau
        except StatsError:
            continue
        if best_tau is None or tau > best_tau:
            best_k, best_tau = k, tau
    if best_k is None:
        raise BaselineError("validation tau undefined for every K")
    return StaticJurySpec(
        kind="average_top_k",
        pool=pool,
        parameters={
            "K": best_k,
            "ranking": ranking,
            "selected": ranking[:best_k],
            "per_judge_valid_tau": taus,
        },
        fitted_on=fitted_on,
    )


def fit_weighted_regression(
    train_instances: Sequence[Instance],
    pool: Sequence[str],
    fitted_on: str = "",
) -> StaticJurySpec:
    """No-intercept least squares of human scores on judge scores; emitted
    predictions are floored at the minimum training human score."""
    pool = tuple(pool)
    if len(train_instances) < len(pool):
        raise BaselineError(
            f"need at least {len(pool)} training rows for {len(pool)} coefficients"
        )
    X = _score_matrix(train_instances, pool)
    y = np.array([inst.human_normalized for inst in train_instances])
    gram = X.T @ X
    warning = None
    try:
        coef = np.linalg.solve(gram, X.T @ y)
    except np.linalg.LinAlgError:
        coef = np.linalg.solve(gram + REGRESSION_RIDGE * np.eye(len(pool)), X.T @ y)
        warning = f"singular normal matrix; ridge {REGRESSION_RIDGE} applied"
    parameters = {
        "coefficients": {j: float(c) for j, c in zip(pool, coef)},
        "floor": float(y.min()),
    }
    if warning:
        parameters["warning"] = warning
    return StaticJurySpec(
        kind="weighted_regression", pool=pool, parameters=parameters, fitted_on=fitted_on
    )


def fit_weighted_tau(
    valid_instances: Sequence[Instance],
    pool: Sequence[str],
    fitted_on: str = "",
) -> StaticJurySpec:
    """Softmax (temperature 1) of per-judge validation taus as weights."""
    if not valid_instances:
        raise BaselineError("validation set is empty")
    pool = tuple(pool)
    taus = per_judge_taus(valid_instances, pool)
    values = np.array([taus[j] for j in pool])
    shifted = np.exp(values - values.max())  # shift-invariant, overflow-safe
    weights = shifted / shifted.sum()
    return StaticJurySpec(
        kind="weighted_tau",
        pool=pool,
        parameters={
            "weights": {j: float(w) for j, w in zip(pool, weights)},
            "per_judge_valid_tau": taus,
        },
        fitted_on=fitted_on,
    )


def static_jury_score(spec: StaticJurySpec, instance: Instance) -> float:
    """Score one instance under a fitted static jury."""
    if spec.kind == "average_all":
        return average_all(instance, spec.pool)
    if spec.kind == "average_top_k":
        selected = spec.parameters["selected"]
        return float(np.mean([instance.judge_normalized(j) for j in selected]))
    if spec.kind == "weighted_regression":
        coeffs = spec.parameters["coefficients"]
        raw = sum(coeffs[j] * instance.judge_normalized(j) for j in spec.pool)
        return float(max(raw, spec.parameters["floor"]))
    if spec.kind == "weighted_tau":
        weights = spec.parameters["weights"]
        return float(sum(weights[j] * instance.judge_normalized(j) for j in spec.pool))
    raise BaselineError(f"unknown static jury kind {spec.kind!r}")


def average_all_spec(pool: Sequence[str], fitted_on: str = "") -> StaticJurySpec:
    return StaticJurySpec(kind="average_all", pool=tuple(pool), fitted_on=fitted_on)
