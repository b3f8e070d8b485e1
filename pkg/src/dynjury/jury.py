"""Per-instance reliability prediction, top-K jury selection, weighted
aggregation, and whole-system tuning of (K, per-judge tolerance)."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .boost import BoostedModel, ParamGrid, random_search
from .corpus import Instance, label_reliability
from .stats import StatsError, TauResult, kendall_tau
from .util import derive_seed

EXHAUSTIVE_COMBO_LIMIT = 20000


class JuryError(ValueError):
    pass


@dataclass(frozen=True)
class ReliabilityVector:
    judge_ids: tuple[str, ...]
    r: np.ndarray  # aligned with judge_ids, values in [0, 1]


@dataclass(frozen=True)
class JuryVerdict:
    instance_id: str
    selected: tuple[str, ...]  # descending reliability, pool order on ties
    weights: tuple[float, ...]
    score: float
    per_judge_reliability: dict[str, float]


@dataclass
class JuryConfig:
    pool: tuple[str, ...]
    K: int
    per_judge_tau: dict[str, float]
    model_refs: dict[str, str] = field(default_factory=dict)
    tuning_log: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 1 <= self.K <= len(self.pool):
            raise JuryError(f"jury size {self.K} invalid for pool of {len(self.pool)}")
        missing = [j for j in self.pool if j not in self.per_judge_tau]
        if missing:
            raise JuryError(f"pooled judges without a tolerance: {missing}")

    def to_json(self) -> dict:
        return {
            "pool": list(self.pool),
            "K": self.K,
            "per_judge_tau": dict(self.per_judge_tau),
            "model_refs": dict(self.model_refs),
            "tuning_log": self.tuning_log,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "JuryConfig":
        return cls(
            pool=tuple(obj["pool"]),
            K=int(obj["K"]),
            per_judge_tau={k: float(v) for k, v in obj["per_judge_tau"].items()},
            model_refs=dict(obj.get("model_refs") or {}),
            tuning_log=list(obj.get("tuning_log") or []),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "JuryConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


def predict_reliabilities(
    features, pool: Sequence[str], models: dict[str, BoostedModel]
) -> ReliabilityVector:
    """One reliability per pooled judge for a single feature row."""
    from .boost import predict_proba

    missing = [j for j in pool if j not in models]
    if missing:
        raise JuryError(f"no reliability model for judge(s) {missing}")
    r = np.array([predict_proba(models[j], features) for j in pool])
    return ReliabilityVector(tuple(pool), r)


def reliability_matrix(
    X: np.ndarray, pool: Sequence[str], models: dict[str, BoostedModel]
) -> np.ndarray:
    """(n_instances, n_judges) predicted reliabilities."""
    missing = [j for j in pool if j not in models]
    if missing:
        raise JuryError(f"no reliability model for judge(s) {missing}")
    X = np.asarray(X, dtype=float)
    return np.column_stack([models[j].predict_proba_matrix(X) for j in pool])


def select_indices(r: np.ndarray, k: int) -> list[int]:
    """Indices of the K largest reliabilities; ties go to earlier pool slots."""
    n = len(r)
    if not 1 <= k <= n:
        raise JuryError(f"cannot select {k} judges from pool of {n}")
    order = np.argsort(-np.asarray(r, dtype=float), kind="stable")
    return [int(i) for i in order[:k]]


def select_jury(r: ReliabilityVector, k: int) -> list[str]:
    return [r.judge_ids[i] for i in select_indices(r.r, k)]


def aggregate(selected_scores: Sequence[float], selected_r: Sequence[float]) -> float:
    """Reliability-weighted mean, w_i = r_i / sum(r); uniform on all-zero r."""
    scores = np.asarray(selected_scores, dtype=float)
    r = np.asarray(selected_r, dtype=float)
    if scores.shape != r.shape or scores.ndim != 1 or len(scores) == 0:
        raise JuryError("scores and reliabilities must be equal-length and nonempty")
    if (r < 0).any():
        raise JuryError("reliabilities must be >= 0")
    total = r.sum()
    weights = r / total if total > 0 else np.full(len(r), 1.0 / len(r))
    return float(weights @ scores)


def jury_weights(selected_r: Sequence[float]) -> np.ndarray:
    r = np.asarray(selected_r, dtype=float)
    total = r.sum()
    return r / total if total > 0 else np.full(len(r), 1.0 / len(r))


def _judge_score_matrix(instances: Sequence[Instance], pool: Sequence[str]) -> np.ndarray:
    """(n, N) normalized judge scores; missing scores are hard errors."""
    rows = np.empty((len(instances), len(pool)))
    for i, inst in enumerate(instances):
        for j, judge in enumerate(pool):
            rows[i, j] = inst.judge_normalized(judge)
    return rows


def jury_scores_for_matrix(rel: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Aggregated jury score per row given reliabilities and judge scores."""
    out = np.empty(rel.shape[0])
    for i in range(rel.shape[0]):
        idx = select_indices(rel[i], k)
        out[i] = aggregate(scores[i, idx], rel[i, idx])
    return out


@dataclass(frozen=True)
class JuryEvaluation:
    verdicts: tuple[JuryVerdict, ...]
    tau_overall: TauResult | None
    tau_by_dataset: dict[str, TauResult | None]


def evaluate_jury(
    instances: Sequence[Instance],
    config: JuryConfig,
    models: dict[str, BoostedModel],
    features: np.ndarray,
) -> JuryEvaluation:
    """Per-instance verdicts plus Kendall tau against human scores, overall
    and grouped by dataset. Tau is None where it is undefined (all tied)."""
    if len(instances) != len(features):
        raise JuryError("features must align with instances")
    rel = reliability_matrix(features, config.pool, models)
    scores = _judge_score_matrix(instances, config.pool)
    verdicts = []
    jury_scores = np.empty(len(instances))
    for i, inst in enumerate(instances):
        idx = select_indices(rel[i], config.K)
        weights = jury_weights(rel[i, idx])
        score = float(weights @ scores[i, idx])
        jury_scores[i] = score
        verdicts.append(
            JuryVerdict(
                instance_id=inst.id,
                selected=tuple(config.pool[j] for j in idx),
                weights=tuple(float(w) for w in weights),
                score=score,
                per_judge_reliability={config.pool[j]: float(rel[i, j]) for j in range(len(config.pool))},
            )
        )
    human = np.array([inst.human_normalized for inst in instances])

    def safe_tau(mask: np.ndarray) -> TauResult | None:
        try:
            return kendall_tau(jury_scores[mask], human[mask])
        except StatsError:
            return None

    everything = np.ones(len(instances), dtype=bool)
    datasets = sorted({inst.dataset_name for inst in instances})
    by_dataset = {
        name: safe_tau(np.array([inst.dataset_name == name for inst in instances]))
        for name in datasets
    }
    return JuryEvaluation(tuple(verdicts), safe_tau(everything), by_dataset)


def train_reliability_models(
    train_instances: Sequence[Instance],
    valid_instances: Sequence[Instance],
    X_train: np.ndarray,
    X_valid: np.ndarray,
    pool: Sequence[str],
    tau_grid: Sequence[float],
    grid: ParamGrid,
    trials: int,
    seed: int,
    feature_names: Sequence[str] | None = None,
    metadata: dict | None = None,
) -> dict[tuple[str, float], tuple[BoostedModel, float]]:
    """One tuned model per (judge, tolerance): random-search over the grid,
    keyed by validation AUC. Returns {(judge, tau): (model, valid_auc)}."""
    models: dict[tuple[str, float], tuple[BoostedModel, float]] = {}
    h_train = np.array([inst.human_normalized for inst in train_instances])
    h_valid = np.array([inst.human_normalized for inst in valid_instances])
    for judge in pool:
        j_train = np.array([inst.judge_normalized(judge) for inst in train_instances])
        j_valid = np.array([inst.judge_normalized(judge) for inst in valid_instances])
        for tau in tau_grid:
            y_train = np.array(
                [label_reliability(h, j, tau) for h, j in zip(h_train, j_train)]
            )
            y_valid = np.array(
                [label_reliability(h, j, tau) for h, j in zip(h_valid, j_valid)]
            )
            meta = dict(metadata or {})
            meta.update({"judge_id": judge, "tau": tau})
            _, model, valid_auc = random_search(
                (X_train, y_train),
                (X_valid, y_valid),
                grid,
                trials=trials,
                seed=derive_seed(seed, "boost-search", judge, tau),
                feature_names=feature_names,
                metadata=meta,
            )
            models[(judge, tau)] = (model, valid_auc)
    return models


def _valid_tau_for(
    rel: np.ndarray, scores: np.ndarray, human: np.ndarray, k: int
) -> float | None:
    jury_scores = jury_scores_for_matrix(rel, scores, k)
    try:
        return kendall_tau(jury_scores, human).tau
    except StatsError:
        return None


def tune_system(
    train_instances: Sequence[Instance],
    valid_instances: Sequence[Instance],
    pool: Sequence[str],
    tau_grid: Sequence[float],
    X_train: np.ndarray,
    X_valid: np.ndarray,
    K_range: Sequence[int] | None = None,
    mode: str = "independent_tau",
    seed: int = 0,
    grid: ParamGrid | None = None,
    trials: int = 20,
    feature_names: Sequence[str] | None = None,
    metadata: dict | None = None,
) -> tuple[JuryConfig, dict[str, BoostedModel], dict[tuple[str, float], tuple[BoostedModel, float]]]:
    """Pick each judge's tolerance and the jury size on the validation set.

    independent_tau (default): each judge's tau maximizes its own
    reliability-model validation AUC, then K maximizes validation tau.
    exhaustive: full Cartesian product of per-judge tolerances and K; only
    feasible for small pools. Ties always resolve to the smaller K (and
    smaller tolerance), so tuning is deterministic.
    """
    if mode not in ("independent_tau", "exhaustive"):
        raise JuryError(f"unknown tuning mode {mode!r}")
    if not tau_grid:
        raise JuryError("empty tolerance grid")
    pool = tuple(pool)
    n = len(pool)
    if K_range is None:
        K_range = range(2, n)  # excludes K=1 and K=N by design
    K_range = sorted(K_range)  # ascending scan makes smallest-K win ties
    if not K_range:
        raise JuryError("K range empty: pool too small to form a proper jury")
    if any(not 1 <= k <= n for k in K_range):
        raise JuryError(f"K range {K_range} incompatible with pool of {n}")
    grid = grid or ParamGrid()

    by_judge_tau = train_reliability_models(
        train_instances,
        valid_instances,
        X_train,
        X_valid,
        pool,
        tau_grid,
        grid,
        trials,
        seed,
        feature_names=feature_names,
        metadata=metadata,
    )
    human_valid = np.array([inst.human_normalized for inst in valid_instances])
    scores_valid = _judge_score_matrix(valid_instances, pool)
    tuning_log: list[dict] = []

    def rel_for(assignment: dict[str, float]) -> np.ndarray:
        return np.column_stack(
            [by_judge_tau[(j, assignment[j])][0].predict_proba_matrix(X_valid) for j in pool]
        )

    if mode == "independent_tau":
        assignment: dict[str, float] = {}
        for judge in pool:
            best_tau, best_auc = None, -1.0
            for tau in sorted(tau_grid):  # ties resolve to the smaller tolerance
                _, valid_auc = by_judge_tau[(judge, tau)]
                tuning_log.append({"judge": judge, "tau": tau, "valid_auc": valid_auc})
                if best_tau is None or valid_auc > best_auc:
                    best_tau, best_auc = tau, valid_auc
            assignment[judge] = float(best_tau)
        rel = rel_for(assignment)
        best_k, best_tau_value = None, None
        for k in K_range:
            tau_value = _valid_tau_for(rel, scores_valid, human_valid, k)
            tuning_log.append({"K": k, "per_judge_tau": dict(assignment), "valid_tau": tau_value})
            if tau_value is None:
                continue
            if best_tau_value is None or tau_value > best_tau_value:
                best_k, best_tau_value = k, tau_value
        if best_k is None:
            raise JuryError("validation tau undefined for every jury size")
        chosen_assignment = assignment
        chosen_k = best_k
    else:
        combos = len(tau_grid) ** n * len(K_range)
        if combos > EXHAUSTIVE_COMBO_LIMIT:
            raise JuryError(
                f"exhaustive tuning needs {combos} evaluations; use independent_tau"
            )
        best_key = None
        chosen_assignment, chosen_k = None, None
        for taus in itertools.product(sorted(tau_grid), repeat=n):
            assignment = dict(zip(pool, map(float, taus)))
            rel = rel_for(assignment)
            for k in K_range:
                tau_value = _valid_tau_for(rel, scores_valid, human_valid, k)
                tuning_log.append(
                    {"K": k, "per_judge_tau": dict(assignment), "valid_tau": tau_value}
                )
                if tau_value is None:
                    continue
                key = (-tau_value, k, taus)
                if best_key is None or key < best_key:
                    best_key = key
                    chosen_assignment, chosen_k = assignment, k
        if chosen_assignment is None:
            raise JuryError("validation tau undefined for every configuration")

    chosen_models = {j: by_judge_tau[(j, chosen_assignment[j])][0] for j in pool}
    config = JuryConfig(
        pool=pool,
        K=chosen_k,
        per_judge_tau=chosen_assignment,
        tuning_log=tuning_log,
    )
    return config, chosen_models, by_judge_tau
