"""End-to-end orchestration: per-seed split / label / train / tune /
baseline fitting / test evaluation, aggregation across seeds, diagnostic
tables, calibration reruns, and artifact layout.

Artifact layout (per task_metric cell under out_dir):
    seeds/seed_<s>/split.json          train/valid/test ids
    seeds/seed_<s>/jury_config.json    tuned config + tuning log + visible ids
    seeds/seed_<s>/models/<judge>.json chosen reliability models
    seeds/seed_<s>/taus.json           per-method tau by dataset
    seeds/seed_<s>/test_table.csv      per-instance test outcomes
    report.csv / report_boxplot.svg    aggregated method table (Fig. 2 style)
    selection_frequency.csv/.svg       judge selection by reliability rank
    importance_top5.csv                top-5 permutation importances per judge
    bin_analysis.csv                   per-tertile judge tau + selection rate
    model_weakness.csv                 feature gaps between error groups
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines as bl
from . import reporting
from .boost import BoostedModel, ParamGrid
from .corpus import CorpusError, Instance, SplitSpec, Task, ingest, split
from .embedfeat import FileEmbeddingCache, HashEmbedder, RemoteEmbeddingProvider
from .jury import JuryError, evaluate_jury, tune_system
from .reporting import METHOD_DYNAMIC, NA
from .stats import (
    StatsError,
    bin_analysis,
    group_feature_diff,
    isotonic_fit,
    kendall_tau,
    permutation_importance,
)
from .textfeat import CorpusFeatureCache, validate_drop_groups
from .util import fmt_float, read_json, write_json

DEFAULT_TAU_GRIDS = {"summarization": (0.0, 0.25), "rag": (0.0,)}
EXACT_MATCH_EPS = 1e-9


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    corpus: str = "corpus.jsonl"
    out_dir: str = "artifacts"
    pool: tuple[str, ...] = ()
    proportions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_mode: str = "stratified_by_dataset"
    held_out: str | None = None
    tau_grids: dict[str, tuple[float, ...]] = field(
        default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_TAU_GRIDS.items()}
    )
    k_min: int | None = None
    k_max: int | None = None
    fixed_k: int | None = None
    fixed_tau: float | None = None
    drop_features: tuple[str, ...] = ()
    tuning_mode: str = "independent_tau"
    boost_grid: ParamGrid = field(default_factory=ParamGrid)
    trials: int = 20
    seeds: tuple[int, ...] = tuple(range(10))
    pca_components: int = 10
    embedder: dict = field(default_factory=lambda: {"kind": "hash", "dim": 64})
    embedding_cache_dir: str | None = None
    judge_clients: tuple[dict, ...] = ()
    scenario: dict | None = None
    bin_feature: str | None = None
    importance_repeats: int = 5
    error_threshold: float = 0.25

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds list must be nonempty")
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ConfigError(f"proportions must sum to 1: {self.proportions}")
        validate_drop_groups(self.drop_features)
        if self.tuning_mode not in ("independent_tau", "exhaustive"):
            raise ConfigError(f"unknown tuning mode {self.tuning_mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for task_name in self.tau_grids:
            if task_name not in ("summarization", "rag"):
                raise ConfigError(f"unknown task {task_name!r} in tau_grids")

    def to_json(self) -> dict:
        return {
            "corpus": self.corpus,
            "out_dir": self.out_dir,
            "pool": list(self.pool),
            "proportions": list(self.proportions),
            "split_mode": self.split_mode,
            "held_out": self.held_out,
            "tau_grids": {k: list(v) for k, v in self.tau_grids.items()},
            "k_min": self.k_min,
            "k_max": self.k_max,
            "fixed_k": self.fixed_k,
            "fixed_tau": self.fixed_tau,
            "drop_features": list(self.drop_features),
            "tuning_mode": self.tuning_mode,
            "boost_grid": self.boost_grid.to_json(),
            "trials": self.trials,
            "seeds": list(self.seeds),
            "pca_components": self.pca_components,
            "embedder": self.embedder,
            "embedding_cache_dir": self.embedding_cache_dir,
            "judge_clients": list(self.judge_clients),
            "scenario": self.scenario,
            "bin_feature": self.bin_feature,
            "importance_repeats": self.importance_repeats,
            "error_threshold": self.error_threshold,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        known = {
            "corpus",
            "out_dir",
            "pool",
            "proportions",
            "split_mode",
            "held_out",
            "tau_grids",
            "k_min",
            "k_max",
            "fixed_k",
            "fixed_tau",
            "drop_features",
            "tuning_mode",
            "boost_grid",
            "trials",
            "seeds",
            "pca_components",
            "embedder",
            "embedding_cache_dir",
            "judge_clients",
            "scenario",
            "bin_feature",
            "importance_repeats",
            "error_threshold",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kwargs: dict = dict(obj)
        try:
            if "pool" in kwargs:
                kwargs["pool"] = tuple(kwargs["pool"])
            if "proportions" in kwargs:
                kwargs["proportions"] = tuple(kwargs["proportions"])
            if "tau_grids" in kwargs:
                kwargs["tau_grids"] = {
                    k: tuple(float(t) for t in v) for k, v in kwargs["tau_grids"].items()
                }
            if "drop_features" in kwargs:
                kwargs["drop_features"] = tuple(kwargs["drop_features"])
            if "boost_grid" in kwargs:
                kwargs["boost_grid"] = ParamGrid.from_json(kwargs["boost_grid"])
            if "seeds" in kwargs:
                kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
            if "judge_clients" in kwargs:
                kwargs["judge_clients"] = tuple(kwargs["judge_clients"])
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            return cls.from_json(read_json(path))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(
            seed=seed,
            proportions=self.proportions,
            mode=self.split_mode,
            held_out=self.held_out,
        )

    def tau_grid_for(self, task: Task) ->tuple[float, ...]:
        if self.fixed_tau is not None:
            return (float(self.fixed_tau),)
        return tuple(self.tau_grids.get(task.value, DEFAULT_TAU_GRIDS[task.value]))

    def k_range_for(self, n_pool: int) -> list[int]:
        if self.fixed_k is not None:
            return [int(self.fixed_k)]
        lo = self.k_min if self.k_min is not None else 2
        hi = self.k_max if self.k_max is not None else n_pool - 1
        return [k for k in range(lo, hi + 1)]


def make_embedder(config: PipelineConfig):
    spec = config.embedder or {"kind": "hash"}
    kind = spec.get("kind", "hash")
    if kind == "hash":
        provider = HashEmbedder(int(spec.get("dim", 64)))
    elif kind == "remote":
        provider = RemoteEmbeddingProvider(
            url=spec["url"],
            provider_id=spec.get("provider_id", "remote"),
            dim=int(spec["dim"]),
            batch_size=int(spec.get("batch_size", 32)),
            max_in_flight=int(spec.get("max_in_flight", 4)),
        )
    else:
        raise ConfigError(f"unknown embedder kind {kind!r}")
    if config.embedding_cache_dir:
        return FileEmbeddingCache(config.embedding_cache_dir, provider)
    return provider


def infer_pool(instances: Sequence[Instance]) -> tuple[str, ...]:
    """Judges scored on every instance, in sorted order."""
    shared: set[str] | None = None
    for inst in instances:
        ids = set(inst.judge_scores)
        shared = ids if shared is None else shared & ids
    if not shared:
        raise PipelineError("no judge has scored the entire corpus; set pool explicitly")
    return tuple(sorted(shared))


def group_by_cell(instances: Sequence[Instance]) -> dict[tuple[str, str], list[Instance]]:
    cells: dict[tuple[str, str], list[Instance]] = {}
    for inst in instances:
        cells.setdefault((inst.task.value, inst.metric.value), []).append(inst)
    return cells


def default_bin_feature(task: Task) -> str:
    return "response_COUNT_CHAR" if task is Task.RAG else "output_CHAR_COMPRESSION"


@dataclass
class SeedOutcome:
    seed: int
    taus: dict[str, dict[str, float | None]]  # method -> dataset/Overall -> tau
    test_rows: list[dict]  # one per test instance (see test_table.csv)
    pool: tuple[str, ...]
    jury_k: int


def _safe_tau(scores: np.ndarray, human: np.ndarray) -> float | None:
    try:
        return kendall_tau(scores, human).tau
    except StatsError:
        return None


def _method_taus(
    scores: np.ndarray, human: np.ndarray, datasets: Sequence[str]
) -> dict[str, float | None]:
    out: dict[str, float | None] = {"Overall": _safe_tau(scores, human)}
    names = sorted(set(datasets))
    arr = np.asarray(datasets)
    for name in names:
        mask = arr == name
        out[name] = _safe_tau(scores[mask], human[mask])
    return out


class CellRunner:
    """Runs one (task, metric) cell of the corpus across seeds."""

    def __init__(
        self,
        instances: Sequence[Instance],
        config: PipelineConfig,
        cell_dir: Path,
        embedder=None,
        cache: CorpusFeatureCache | None = None,
    ):
        self.instances = list(instances)
        self.config = config
        self.cell_dir = Path(cell_dir)
        self.task = self.instances[0].task
        self.metric = self.instances[0].metric
        self.pool = tuple(config.pool) or infer_pool(self.instances)
        self.embedder = embedder if embedder is not None else make_embedder(config)
        self.cache = cache or CorpusFeatureCache(
            self.instances,
            self.embedder,
            pca_components=config.pca_components,
            drop_groups=config.drop_features,
        )
        missing = [
            (inst.id, j)
            for inst in self.instances
            for j in self.pool
            if j not in inst.judge_scores
        ]
        if missing:
            raise PipelineError(
                f"instances missing pooled judge scores (first: {missing[0]}); "
                "run the score stage first"
            )

    # ----- seed stages -------------------------------------------------

    def split_seed(self, seed: int, instances: Sequence[Instance] | None = None):
        pool_instances = list(instances) if instances is not None else self.instances
        return split(pool_instances, self.config.split_spec(seed))

    def run_seed(
        self,
        seed: int,
        instances: Sequence[Instance] | None = None,
        write: bool = True,
    ) -> SeedOutcome:
        config = self.config
        source = list(instances) if instances is not None else self.instances
        train_set, valid_set, test_set = self.split_seed(seed, source)
        if not train_set or not valid_set or not test_set:
            raise PipelineError(f"seed {seed}: empty split partition")
        tr_idx = self.cache.indices_of(train_set)
        va_idx = self.cache.indices_of(valid_set)
        te_idx = self.cache.indices_of(test_set)
        emodel = self.cache.fit_embedding_model(tr_idx)
        names, X_train = self.cache.matrix(tr_idx, emodel)
        _, X_valid = self.cache.matrix(va_idx, emodel)
        _, X_test = self.cache.matrix(te_idx, emodel)

        tau_grid = config.tau_grid_for(self.task)
        k_range = config.k_range_for(len(self.pool))
        if not k_range:
            raise JuryError("K range empty: pool too small to form a proper jury")
        jury_config, models, _ = tune_system(
            train_set,
            valid_set,
            self.pool,
            tau_grid,
            X_train,
            X_valid,
            K_range=k_range,
            mode=config.tuning_mode,
            seed=seed,
            grid=config.boost_grid,
            trials=config.trials,
            feature_names=names,
            metadata={"task": self.task.value, "metric": self.metric.value, "seed": seed},
        )
        evaluation = evaluate_jury(test_set, jury_config, models, X_test)

        fingerprint = f"seed={seed}"
        spec_all = bl.average_all_spec(self.pool, fingerprint)
        spec_topk = bl.fit_average_top_k(valid_set, self.pool, k_range, fingerprint)
        spec_reg = bl.fit_weighted_regression(train_set, self.pool, fingerprint)
        spec_wtau = bl.fit_weighted_tau(valid_set, self.pool, fingerprint)
        static_specs = {
            "average_all": spec_all,
            "average_top_k": spec_topk,
            "weighted_regression": spec_reg,
            "weighted_tau": spec_wtau,
        }

        human = np.array([inst.human_normalized for inst in test_set])
        datasets = [inst.dataset_name for inst in test_set]
        dynamic_scores = np.array([v.score for v in evaluation.verdicts])
        method_scores: dict[str, np.ndarray] = {METHOD_DYNAMIC: dynamic_scores}
        for name, spec in static_specs.items():
            method_scores[name] = np.array(
                [bl.static_jury_score(spec, inst) for inst in test_set]
            )
        for judge in self.pool:
            method_scores[f"single:{judge}"] = np.array(
                [inst.judge_normalized(judge) for inst in test_set]
            )
        taus = {
            method: _method_taus(scores, human, datasets)
            for method, scores in method_scores.items()
        }

        bin_feature = config.bin_feature or default_bin_feature(self.task)
        if bin_feature not in names:
            raise PipelineError(f"bin feature {bin_feature!r} not in feature set")
        bin_col = X_test[:, names.index(bin_feature)]
        test_rows = []
        for i, inst in enumerate(test_set):
            row = {
                "instance_id": inst.id,
                "dataset": inst.dataset_name,
                "human": human[i],
                "bin_feature": float(bin_col[i]),
                "dynamic_score": float(dynamic_scores[i]),
                "selected": ";".join(evaluation.verdicts[i].selected),
            }
            for judge in self.pool:
                row[f"score:{judge}"] = float(method_scores[f"single:{judge}"][i])
            for name in static_specs:
                row[f"method:{name}"] = float(method_scores[name][i])
            test_rows.append(row)

        outcome = SeedOutcome(
            seed=seed,
            taus=taus,
            test_rows=test_rows,
            pool=self.pool,
            jury_k=jury_config.K,
        )
        if write:
            self._write_seed(
                seed,
                train_set,
                valid_set,
                test_set,
                jury_config,
                models,
                static_specs,
                outcome,
                bin_feature,
            )
            self._maybe_write_importance(
                seed, models, jury_config, test_set, X_test, names
            )
            self._maybe_write_model_weakness(seed, names, X_test, dynamic_scores, human)
        return outcome

    # ----- artifact writers --------------------------------------------

    def _seed_dir(self, seed: int) -> Path:
        return self.cell_dir / "seeds" / f"seed_{seed}"

    def _write_seed(
        self,
        seed: int,
        train_set,
        valid_set,
        test_set,
        jury_config,
        models: dict[str, BoostedModel],
        static_specs,
        outcome: SeedOutcome,
        bin_feature: str,
    ) -> None:
        seed_dir = self._seed_dir(seed)
        write_json(
            seed_dir / "split.json",
            {
                "seed": seed,
                "train_ids": sorted(i.id for i in train_set),
                "valid_ids": sorted(i.id for i in valid_set),
                "test_ids": sorted(i.id for i in test_set),
            },
        )
        refs = {}
        for judge, model in models.items():
            rel = f"models/{judge}.json"
            model.save(seed_dir / rel)
            refs[judge] = rel
        config_obj = jury_config.to_json()
        config_obj["model_refs"] = refs
        config_obj["visible_ids"] = sorted(
            [i.id for i in train_set] + [i.id for i in valid_set]
        )
        write_json(seed_dir / "jury_config.json", config_obj)
        write_json(
            seed_dir / "static_juries.json",
            {name: spec.to_json() for name, spec in static_specs.items()},
        )
        write_json(seed_dir / "taus.json", {"bin_feature": bin_feature, "taus": outcome.taus})
        self._write_test_table(seed_dir / "test_table.csv", outcome)

    def _write_test_table(self, path: Path, outcome: SeedOutcome) -> None:
        rows = outcome.test_rows
        fields = ["instance_id", "dataset", "human", "bin_feature", "dynamic_score", "selected"]
        fields += [f"score:{j}" for j in outcome.pool]
        fields += [f"method:{m}" for m in reporting.STATIC_METHODS]
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for row in rows:
                writer.writerow(
                    [
                        row[f] if f in ("instance_id", "dataset", "selected") else fmt_float(row[f])
                        for f in fields
                    ]
                )

    def _maybe_write_importance(
        self, seed: int, models, jury_config, test_set, X_test, names
    ) -> None:
        """Permutation importance on the first configured seed only (it is
        the expensive diagnostic)."""
        if seed != self.config.seeds[0]:
            return
        from .corpus import label_reliability

        human = np.array([inst.human_normalized for inst in test_set])
        rows = []
        for judge in self.pool:
            scores = np.array([inst.judge_normalized(judge) for inst in test_set])
            tau = jury_config.per_judge_tau[judge]
            labels = np.array(
                [label_reliability(h, s, tau) for h, s in zip(human, scores)]
            )
            if labels.min() == labels.max():
                continue  # AUC undefined; skip this judge's table
            importance = permutation_importance(
                models[judge],
                X_test,
                labels,
                repeats=self.config.importance_repeats,
                seed=seed,
            )
            for feature, mean, std in zip(
                importance.feature_names, importance.mean_importance, importance.std_importance
            ):
                rows.append((judge, feature, float(mean), float(std)))
        path = self.cell_dir / "importance_raw.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["judge", "feature", "importance_mean", "importance_std"])
            for judge, feature, mean, std in rows:
                writer.writerow([judge, feature, fmt_float(mean), fmt_float(std)])

    def _maybe_write_model_weakness(
        self, seed: int, names, X_test, dynamic_scores, human
    ) -> None:
        """High- vs low-error feature gaps on the first seed, embedding
        features excluded for interpretability."""
        if seed != self.config.seeds[0]:
            return
        from .textfeat import feature_group

        errors = np.abs(np.asarray(dynamic_scores) - np.asarray(human))
        keep = [i for i, n in enumerate(names) if feature_group(n) != "embedding"]
        try:
            rows = group_feature_diff(
                [names[i] for i in keep], X_test[:, keep], errors, self.config.error_threshold
            )
        except StatsError:
            return
        path = self.cell_dir / "model_weakness.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature", "median_difference", "mean_difference"])
            for row in rows:
                writer.writerow(
                    [row.feature, fmt_float(row.median_difference), fmt_float(row.mean_difference)]
                )

    # ----- stage-level entry points (train / tune / evaluate) ------------

    def stage_train(self, seed: int) -> Path:
        """Train one model per (judge, tolerance) and write them with an AUC
        summary; the tuned pipeline retrains internally, this stage exists
        for inspection and piecemeal runs."""
        from .jury import train_reliability_models

        config = self.config
        train_set, valid_set, _ = self.split_seed(seed)
        tr_idx = self.cache.indices_of(train_set)
        va_idx = self.cache.indices_of(valid_set)
        emodel = self.cache.fit_embedding_model(tr_idx)
        names, X_train = self.cache.matrix(tr_idx, emodel)
        _, X_valid = self.cache.matrix(va_idx, emodel)
        by_judge_tau = train_reliability_models(
            train_set,
            valid_set,
            X_train,
            X_valid,
            self.pool,
            config.tau_grid_for(self.task),
            config.boost_grid,
            config.trials,
            seed,
            feature_names=names,
            metadata={"task": self.task.value, "metric": self.metric.value, "seed": seed},
        )
        seed_dir = self._seed_dir(seed)
        rows = []
        for (judge, tau), (model, valid_auc) in sorted(by_judge_tau.items()):
            rel = f"models_all/{judge}_tau{fmt_float(tau, 6)}.json"
            model.save(seed_dir / rel)
            rows.append((judge, tau, valid_auc, rel))
        path = seed_dir / "reliability_auc.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["judge", "tau", "valid_auc", "model_file"])
            for judge, tau, valid_auc, rel in rows:
                writer.writerow([judge, fmt_float(tau), fmt_float(valid_auc), rel])
        return path

    def stage_tune(self, seed: int) -> Path:
        """Tune (per-judge tolerance, K) and persist the jury config + models."""
        config = self.config
        train_set, valid_set, test_set = self.split_seed(seed)
        tr_idx = self.cache.indices_of(train_set)
        va_idx = self.cache.indices_of(valid_set)
        emodel = self.cache.fit_embedding_model(tr_idx)
        names, X_train = self.cache.matrix(tr_idx, emodel)
        _, X_valid = self.cache.matrix(va_idx, emodel)
        jury_config, models, _ = tune_system(
            train_set,
            valid_set,
            self.pool,
            config.tau_grid_for(self.task),
            X_train,
            X_valid,
            K_range=config.k_range_for(len(self.pool)),
            mode=config.tuning_mode,
            seed=seed,
            grid=config.boost_grid,
            trials=config.trials,
            feature_names=names,
            metadata={"task": self.task.value, "metric": self.metric.value, "seed": seed},
        )
        seed_dir = self._seed_dir(seed)
        refs = {}
        for judge, model in models.items():
            rel = f"models/{judge}.json"
            model.save(seed_dir / rel)
            refs[judge] = rel
        config_obj = jury_config.to_json()
        config_obj["model_refs"] = refs
        config_obj["visible_ids"] = sorted(
            [i.id for i in train_set] + [i.id for i in valid_set]
        )
        write_json(seed_dir / "jury_config.json", config_obj)
        write_json(
            seed_dir / "split.json",
            {
                "seed": seed,
                "train_ids": sorted(i.id for i in train_set),
                "valid_ids": sorted(i.id for i in valid_set),
                "test_ids": sorted(i.id for i in test_set),
            },
        )
        return seed_dir / "jury_config.json"

    def stage_evaluate(self, seed: int) -> Path:
        """Evaluate a previously tuned seed by loading the persisted config
        and models from disk (exercises the serialization round trip)."""
        from .jury import JuryConfig

        seed_dir = self._seed_dir(seed)
        config_path = seed_dir / "jury_config.json"
        if not config_path.exists():
            raise PipelineError(f"missing artifact {config_path}; run tune first")
        payload = read_json(config_path)
        jury_config = JuryConfig.from_json(payload)
        models = {
            judge: BoostedModel.load(seed_dir / rel)
            for judge, rel in payload["model_refs"].items()
        }
        train_set, valid_set, test_set = self.split_seed(seed)
        tr_idx = self.cache.indices_of(train_set)
        te_idx = self.cache.indices_of(test_set)
        emodel = self.cache.fit_embedding_model(tr_idx)
        names, X_test = self.cache.matrix(te_idx, emodel)
        evaluation = evaluate_jury(test_set, jury_config, models, X_test)

        fingerprint = f"seed={seed}"
        k_range = self.config.k_range_for(len(self.pool))
        static_specs = {
            "average_all": bl.average_all_spec(self.pool, fingerprint),
            "average_top_k": bl.fit_average_top_k(valid_set, self.pool, k_range, fingerprint),
            "weighted_regression": bl.fit_weighted_regression(train_set, self.pool, fingerprint),
            "weighted_tau": bl.fit_weighted_tau(valid_set, self.pool, fingerprint),
        }
        human = np.array([inst.human_normalized for inst in test_set])
        datasets = [inst.dataset_name for inst in test_set]
        method_scores = {METHOD_DYNAMIC: np.array([v.score for v in evaluation.verdicts])}
        for name, spec in static_specs.items():
            method_scores[name] = np.array([bl.static_jury_score(spec, i) for i in test_set])
        for judge in self.pool:
            method_scores[f"single:{judge}"] = np.array(
                [i.judge_normalized(judge) for i in test_set]
            )
        taus = {m: _method_taus(s, human, datasets) for m, s in method_scores.items()}
        bin_feature = self.config.bin_feature or default_bin_feature(self.task)
        write_json(seed_dir / "taus.json", {"bin_feature": bin_feature, "taus": taus})
        return seed_dir / "taus.json"

    def score_only_taus(
        self, seed: int, instances: Sequence[Instance]
    ) -> dict[str, dict[str, float | None]]:
        """Method taus without the dynamic jury (used when tuning is
        impossible, e.g. every score calibrated to a constant)."""
        train_set, valid_set, test_set = self.split_seed(seed, instances)
        human = np.array([inst.human_normalized for inst in test_set])
        datasets = [inst.dataset_name for inst in test_set]
        method_scores: dict[str, np.ndarray] = {}
        k_range = self.config.k_range_for(len(self.pool))
        fitters = {
            "average_all": lambda: bl.average_all_spec(self.pool),
            "average_top_k": lambda: bl.fit_average_top_k(valid_set, self.pool, k_range),
            "weighted_regression": lambda: bl.fit_weighted_regression(train_set, self.pool),
            "weighted_tau": lambda: bl.fit_weighted_tau(valid_set, self.pool),
        }
        for name, fit in fitters.items():
            try:
                spec = fit()
                method_scores[name] = np.array(
                    [bl.static_jury_score(spec, inst) for inst in test_set]
                )
            except bl.BaselineError:
                continue
        for judge in self.pool:
            method_scores[f"single:{judge}"] = np.array(
                [inst.judge_normalized(judge) for inst in test_set]
            )
        taus = {m: _method_taus(s, human, datasets) for m, s in method_scores.items()}
        taus[METHOD_DYNAMIC] = {"Overall": None, **{d: None for d in sorted(set(datasets))}}
        return taus

    # ----- whole cell ----------------------------------------------------

    def run(self) -> list[SeedOutcome]:
        outcomes = [self.run_seed(seed) for seed in self.config.seeds]
        aggregate_cell(self.cell_dir, self.config, self.pool)
        return outcomes


# ---------------------------------------------------------------------------
# aggregation over stored per-seed artifacts (also used by the report command)
# ---------------------------------------------------------------------------


def _read_seed_taus(cell_dir: Path, seeds: Sequence[int]):
    taus: dict[str, dict[str, list[float | None]]] = {}
    bin_feature = None
    for seed in seeds:
        path = cell_dir / "seeds" / f"seed_{seed}" / "taus.json"
        if not path.exists():
            raise PipelineError(f"missing artifact {path}")
        payload = read_json(path)
        bin_feature = payload["bin_feature"]
        for method, by_dataset in payload["taus"].items():
            bucket = taus.setdefault(method, {})
            for dataset, value in by_dataset.items():
                bucket.setdefault(dataset, []).append(value)
    return taus, bin_feature


def _read_test_tables(cell_dir: Path, seeds: Sequence[int]) -> list[dict]:
    rows = []
    for seed in seeds:
        path = cell_dir / "seeds" / f"seed_{seed}" / "test_table.csv"
        if not path.exists():
            raise PipelineError(f"missing artifact {path}")
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                row["seed"] = seed
                rows.append(row)
    return rows


def aggregate_cell(cell_dir: Path, config: PipelineConfig, pool: Sequence[str]) -> None:
    cell_dir = Path(cell_dir)
    taus, bin_feature = _read_seed_taus(cell_dir, config.seeds)
    rows = reporting.build_report_rows(taus)
    reporting.write_report_csv(cell_dir / "report.csv", rows)

    methods = [METHOD_DYNAMIC, *reporting.STATIC_METHODS] + [f"single:{j}" for j in pool]
    groups = []
    for method in methods:
        per_seed = taus.get(method, {}).get("Overall", [])
        groups.append([v for v in per_seed if v is not None])
    reporting.svg_boxplot(
        cell_dir / "report_boxplot.svg",
        f"Kendall tau by method ({cell_dir.name})",
        methods,
        groups,
    )

    table = _read_test_tables(cell_dir, config.seeds)
    total_verdicts = len(table)
    max_k = 0
    rank_counts: dict[str, list[int]] = {j: [] for j in pool}
    for row in table:
        selected = row["selected"].split(";") if row["selected"] else []
        max_k = max(max_k, len(selected))
    for judge in pool:
        rank_counts[judge] = [0] * max_k
    for row in table:
        selected = row["selected"].split(";") if row["selected"] else []
        for rank, judge in enumerate(selected):
            rank_counts[judge][rank] += 1
    reporting.write_selection_frequency_csv(
        cell_dir / "selection_frequency.csv", pool, rank_counts, total_verdicts
    )
    reporting.svg_bar(
        cell_dir / "selection_frequency.svg",
        f"Jury selection rate ({cell_dir.name})",
        list(pool),
        [sum(rank_counts[j]) / total_verdicts if total_verdicts else 0.0 for j in pool],
    )

    feature_values = [float(row["bin_feature"]) for row in table]
    human = [float(row["human"]) for row in table]
    judge_scores = {j: [float(row[f"score:{j}"]) for row in table] for j in pool}
    selections = [row["selected"].split(";") if row["selected"] else [] for row in table]
    try:
        analysis = bin_analysis(
            feature_values, human, judge_scores, selections, feature_name=bin_feature
        )
        reporting.write_bin_analysis_csv(cell_dir / "bin_analysis.csv", analysis)
    except StatsError as exc:
        (cell_dir / "bin_analysis.csv").write_text(f"error,{exc}\n")

    importance_raw = cell_dir / "importance_raw.csv"
    if importance_raw.exists():
        by_judge: dict[str, list[tuple[str, float, float]]] = {}
        with open(importance_raw, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                by_judge.setdefault(row["judge"], []).append(
                    (
                        row["feature"],
                        float(row["importance_mean"]),
                        float(row["importance_std"]),
                    )
                )
        top5 = {
            judge: sorted(rows, key=lambda r: -r[1])[:5] for judge, rows in by_judge.items()
        }
        reporting.write_importance_csv(cell_dir / "importance_top5.csv", top5)


# ---------------------------------------------------------------------------
# top-level commands
# ---------------------------------------------------------------------------


def corpus_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_all(config: PipelineConfig, instances: Sequence[Instance] | None = None) -> Path:
    out_dir = Path(config.out_dir)
    if instances is None:
        instances = ingest(config.corpus)
    cells = group_by_cell(instances)
    embedder = make_embedder(config)
    cell_dirs = {}
    for (task_name, metric_name), members in sorted(cells.items()):
        cell_dir = out_dir / f"{task_name}_{metric_name}"
        runner = CellRunner(members, config, cell_dir, embedder=embedder)
        runner.run()
        cell_dirs[f"{task_name}_{metric_name}"] = {
            "instances": len(members),
            "pool": list(runner.pool),
        }
    write_json(
        out_dir / "run.json",
        {
            "config": config.to_json(),
            "corpus_sha256": corpus_digest(config.corpus) if Path(config.corpus).exists() else None,
            "cells": cell_dirs,
        },
    )
    return out_dir


def report_only(config: PipelineConfig) -> Path:
    """Rebuild aggregate tables and charts from stored per-seed artifacts."""
    out_dir = Path(config.out_dir)
    run_meta = out_dir / "run.json"
    if not run_meta.exists():
        raise PipelineError(f"missing artifact {run_meta}; run the pipeline first")
    meta = read_json(run_meta)
    for cell_name, info in sorted(meta["cells"].items()):
        aggregate_cell(out_dir / cell_name, config, tuple(info["pool"]))
    return out_dir


def export_features(
    config: PipelineConfig,
    instances: Sequence[Instance] | None = None,
    seed: int | None = None,
) -> list[Path]:
    """Feature-matrix CSV per cell; the PCA block is fitted on the given
    seed's training split (default: first configured seed)."""
    from .textfeat import export_feature_csv

    if instances is None:
        instances = ingest(config.corpus)
    seed = config.seeds[0] if seed is None else seed
    out_dir = Path(config.out_dir)
    embedder = make_embedder(config)
    paths = []
    for (task_name, metric_name), members in sorted(group_by_cell(instances).items()):
        cell_dir = out_dir / f"{task_name}_{metric_name}"
        runner = CellRunner(members, config, cell_dir, embedder=embedder)
        train_set, _, _ = runner.split_seed(seed)
        emodel = runner.cache.fit_embedding_model(runner.cache.indices_of(train_set))
        all_idx = list(range(len(members)))
        names, X = runner.cache.matrix(all_idx, emodel)
        path = cell_dir / "features.csv"
        export_feature_csv(path, [inst.id for inst in members], names, X)
        paths.append(path)
    return paths


def build_judge_clients(config: PipelineConfig) -> list:
    """Instantiate the configured judge clients for the score stage."""
    from .embedfeat import HashEmbedder
    from .judges import (
        HttpJudgeClient,
        HttpJudgeConfig,
        ReplayClient,
        SyntheticClient,
        SyntheticJudgeSpec,
    )
    from .textfeat import extract_text_features

    clients = []
    feature_embedder = HashEmbedder()
    feature_cache: dict[str, dict[str, float]] = {}

    def feature_value(name: str):
        def lookup(instance: Instance) -> float:
            if instance.id not in feature_cache:
                feature_cache[instance.id] = extract_text_features(
                    instance.texts, feature_embedder
                ).as_dict()
            return feature_cache[instance.id][name]

        return lookup

    for spec in config.judge_clients:
        kind = spec.get("kind")
        if kind == "replay":
            clients.append(ReplayClient(spec["judge_id"]))
        elif kind == "synthetic":
            judge_spec = SyntheticJudgeSpec.from_json(
                {k: v for k, v in spec.items() if k != "kind"}
            )
            clients.append(SyntheticClient(judge_spec, feature_value(judge_spec.feature_name)))
        elif kind == "http":
            fields = {k: v for k, v in spec.items() if k != "kind"}
            clients.append(HttpJudgeClient(HttpJudgeConfig(**fields)))
        else:
            raise ConfigError(f"unknown judge client kind {kind!r}")
    ids = [c.judge_id for c in clients]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"conflicting judge ids in client config: {ids}")
    return clients


def leakage_audit(out_dir: str | Path) -> list[str]:
    """Return violations where a tuning log saw a test-split id."""
    out_dir = Path(out_dir)
    violations = []
    for config_path in sorted(out_dir.glob("*/seeds/*/jury_config.json")):
        seed_dir = config_path.parent
        split_info = read_json(seed_dir / "split.json")
        visible = set(read_json(config_path).get("visible_ids") or [])
        leaked = visible & set(split_info["test_ids"])
        if leaked:
            violations.append(f"{config_path}: test ids visible to tuning: {sorted(leaked)[:5]}")
    return violations


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


def _snap_to_scale(value_norm: float, scale: tuple[Fraction, Fraction]) -> Fraction:
    """Map a normalized calibrated score back to the raw scale, snapping to
    the integer grid when the scale is integral (calibrated scores stay on
    the same grid as raw judge scores, so tolerance labeling still works)."""
    lo, hi = scale
    raw = Fraction(value_norm) * (hi - lo) + lo
    if lo.denominator == 1 and hi.denominator == 1:
        snapped = Fraction(round(raw))
        return min(max(snapped, lo), hi)
    return min(max(raw, lo), hi)


def _calibrated_instances(
    instances: Sequence[Instance],
    train_set: Sequence[Instance],
    pool: Sequence[str],
) -> tuple[list[Instance], dict[tuple[str, str], bool]]:
    """Apply per-(judge, dataset) isotonic maps fitted on the training split.

    Judge scores are replaced by their calibrated values (snapped back onto
    the original scale); a degeneracy flag is returned per (judge, dataset)."""
    maps: dict[tuple[str, str], object] = {}
    degenerate: dict[tuple[str, str], bool] = {}
    by_dataset: dict[str, list[Instance]] = {}
    for inst in train_set:
        by_dataset.setdefault(inst.dataset_name, []).append(inst)
    for dataset, members in by_dataset.items():
        human = [inst.human_normalized for inst in members]
        for judge in pool:
            scores = [inst.judge_normalized(judge) for inst in members]
            iso = isotonic_fit(scores, human)
            maps[(judge, dataset)] = iso
            degenerate[(judge, dataset)] = iso.degenerate

    calibrated = []
    for inst in instances:
        scores = dict(inst.judge_scores)
        for judge in pool:
            iso = maps.get((judge, inst.dataset_name))
            if iso is None:
                continue
            scores[judge] = _snap_to_scale(
                iso.evaluate(inst.judge_normalized(judge)), inst.score_scale
            )
        calibrated.append(replace(inst, judge_scores=scores))
    return calibrated, degenerate


def calibrate(config: PipelineConfig, instances: Sequence[Instance] | None = None) -> Path:
    """Isotonic per-(judge, dataset) calibration, then a full rerun on the
    calibrated scores; emits a before/after comparison per cell."""
    out_dir = Path(config.out_dir)
    if instances is None:
        instances = ingest(config.corpus)
    cells = group_by_cell(instances)
    embedder = make_embedder(config)
    for (task_name, metric_name), members in sorted(cells.items()):
        cell_dir = out_dir / f"{task_name}_{metric_name}"
        before_taus, _ = _read_seed_taus(cell_dir, config.seeds)  # requires prior run
        runner = CellRunner(members, config, cell_dir / "calibrated", embedder=embedder)
        after: dict[str, dict[str, list[float | None]]] = {}
        match_before: dict[tuple[str, str], list[float]] = {}
        match_after: dict[tuple[str, str], list[float]] = {}
        degenerate_any: dict[tuple[str, str], bool] = {}
        for seed in config.seeds:
            train_set, _, test_set = runner.split_seed(seed)
            calibrated, degenerate = _calibrated_instances(members, train_set, runner.pool)
            for key, flag in degenerate.items():
                degenerate_any[key] = degenerate_any.get(key, False) or flag
            try:
                seed_taus = runner.run_seed(seed, instances=calibrated, write=True).taus
            except JuryError:
                # calibration flattened the scores; report what is still defined
                seed_taus = runner.score_only_taus(seed, calibrated)
            for method, by_dataset in seed_taus.items():
                bucket = after.setdefault(method, {})
                for dataset, value in by_dataset.items():
                    bucket.setdefault(dataset, []).append(value)
            # exact-match bookkeeping on the test split
            cal_by_id = {inst.id: inst for inst in calibrated}
            for judge in runner.pool:
                for dataset in sorted({t.dataset_name for t in test_set}):
                    rows = [t for t in test_set if t.dataset_name == dataset]
                    raw = np.array([t.judge_normalized(judge) for t in rows])
                    cal = np.array(
                        [cal_by_id[t.id].judge_normalized(judge) for t in rows]
                    )
                    human = np.array([t.human_normalized for t in rows])
                    match_before.setdefault((judge, dataset), []).append(
                        float(np.mean(np.abs(raw - human) <= EXACT_MATCH_EPS))
                    )
                    match_after.setdefault((judge, dataset), []).append(
                        float(np.mean(np.abs(cal - human) <= EXACT_MATCH_EPS))
                    )
        _write_calibration_report(
            cell_dir / "calibration.csv",
            runner.pool,
            before_taus,
            after,
            match_before,
            match_after,
            degenerate_any,
        )
    return out_dir


def _mean_or_none(values: Sequence[float | None]) -> float | None:
    clean = [v for v in values if v is not None]
    return float(np.mean(clean)) if clean else None


def _write_calibration_report(
    path: Path,
    pool: Sequence[str],
    before: dict[str, dict[str, list[float | None]]],
    after: dict[str, dict[str, list[float | None]]],
    match_before: dict[tuple[str, str], list[float]],
    match_after: dict[tuple[str, str], list[float]],
    degenerate: dict[tuple[str, str], bool],
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    methods = [METHOD_DYNAMIC] + [f"single:{j}" for j in pool]
    datasets = sorted(
        {d for m in after.values() for d in m} | {d for m in before.values() for d in m}
    )
    if "Overall" in datasets:
        datasets.remove("Overall")
        datasets.insert(0, "Overall")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "subject",
                "dataset",
                "tau_after",
                "tau_before",
                "match_rate_after",
                "match_rate_before",
                "degenerate",
            ]
        )
        for method in methods:
            judge = method.removeprefix("single:") if method.startswith("single:") else None
            for dataset in datasets:
                tau_after = _mean_or_none(after.get(method, {}).get(dataset, []))
                tau_before = _mean_or_none(before.get(method, {}).get(dataset, []))
                flag = ""
                m_after = m_before = None
                if judge is not None and dataset != "Overall":
                    flag = "yes" if degenerate.get((judge, dataset), False) else "no"
                    m_after = _mean_or_none(match_after.get((judge, dataset), []))
                    m_before = _mean_or_none(match_before.get((judge, dataset), []))
                writer.writerow(
                    [
                        method,
                        dataset,
                        fmt_float(tau_after) if tau_after is not None else NA,
                        fmt_float(tau_before) if tau_before is not None else NA,
                        fmt_float(m_after) if m_after is not None else "",
                        fmt_float(m_before) if m_before is not None else "",
                        flag,
                    ]
                )
