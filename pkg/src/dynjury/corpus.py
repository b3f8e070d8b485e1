"""Evaluation corpus: data model, JSONL ingest, score normalization,
reliability labeling, and dataset splitting.

Scores are kept as exact Fractions from ingest until normalization so that
zero-tolerance labeling of integer-scale scores never hits float rounding.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .util import derived_rng

TOLERANCE_EPS = 1e-9

SUMMARIZATION_ROLES = ("input", "output")
RAG_ROLES = ("question", "context", "response")


class Task(str, enum.Enum):
    SUMMARIZATION = "summarization"
    RAG = "rag"

    @property
    def roles(self) -> tuple[str, ...]:
        return SUMMARIZATION_ROLES if self is Task.SUMMARIZATION else RAG_ROLES

    @property
    def output_role(self) -> str:
        """Role holding generated text (numerator of compression ratios)."""
        return "output" if self is Task.SUMMARIZATION else "response"

    @property
    def source_role(self) -> str:
        """Role holding source material (denominator of compression ratios)."""
        return "input" if self is Task.SUMMARIZATION else "context"


class Metric(str, enum.Enum):
    GROUNDEDNESS = "groundedness"
    RELEVANCE = "relevance"
    COMPLETENESS = "completeness"


class CorpusError(ValueError):
    """Malformed record, scale violation, or inconsistent corpus."""


def _as_fraction(value: object, context: str) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, float, str, Fraction)):
        raise CorpusError(f"{context}: expected a number, got {value!r}")
    try:
        # str(float) keeps the decimal literal exact (0.5 -> 1/2, not the
        # binary expansion), and ints stay exact.
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError) as exc:
        raise CorpusError(f"{context}: unparseable number {value!r}") from exc


@dataclass(frozen=True)
class Instance:
    """One evaluation datum: texts, a human score, and per-judge raw scores."""

    id: str
    task: Task
    metric: Metric
    dataset_name: str
    texts: dict[str, str]
    human_score: Fraction
    score_scale: tuple[Fraction, Fraction]
    judge_scores: dict[str, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lo, hi = self.score_scale
        if not lo < hi:
            raise CorpusError(f"instance {self.id}: degenerate scale [{lo}, {hi}]")
        required = set(self.task.roles)
        have = set(self.texts)
        if have != required:
            missing = sorted(required - have)
            extra = sorted(have - required)
            detail = []
            if missing:
                detail.append(f"missing role(s) {missing}")
            if extra:
                detail.append(f"unexpected role(s) {extra}")
            raise CorpusError(f"instance {self.id}: {'; '.join(detail)}")
        if not lo <= self.human_score <= hi:
            raise CorpusError(
                f"instance {self.id}: human score {self.human_score} out of scale [{lo}, {hi}]"
            )
        for judge, score in self.judge_scores.items():
            if not lo <= score <= hi:
                raise CorpusError(
                    f"instance {self.id}: judge {judge!r} score {score} out of scale [{lo}, {hi}]"
                )

    def with_judge_score(self, judge_id: str, raw: Fraction) -> "Instance":
        scores = dict(self.judge_scores)
        scores[judge_id] = raw
        return replace(self, judge_scores=scores)

    @property
    def human_normalized(self) -> float:
        return normalize(self.human_score, self.score_scale)

    def judge_normalized(self, judge_id: str) -> float:
        if judge_id not in self.judge_scores:
            raise CorpusError(f"instance {self.id}: no score from judge {judge_id!r}")
        return normalize(self.judge_scores[judge_id], self.score_scale)

    def to_record(self) -> dict:
        def num(fr: Fraction) -> float | int:
            return int(fr) if fr.denominator == 1 else float(fr)

        return {
            "id": self.id,
            "task": self.task.value,
            "metric": self.metric.value,
            "dataset": self.dataset_name,
            "texts": dict(self.texts),
            "human_score": num(self.human_score),
            "scale": [num(self.score_scale[0]), num(self.score_scale[1])],
            "judge_scores": {j: num(s) for j, s in self.judge_scores.items()},
        }


def instance_from_record(record: dict, context: str = "record") -> Instance:
    try:
        task = Task(record["task"])
        metric = Metric(record["metric"])
    except (KeyError, ValueError) as exc:
        raise CorpusError(f"{context}: bad task/metric: {exc}") from exc
    for key in ("id", "dataset", "texts", "human_score", "scale"):
        if key not in record:
            raise CorpusError(f"{context}: missing field {key!r}")
    scale = record["scale"]
    if not (isinstance(scale, (list, tuple)) and len(scale) == 2):
        raise CorpusError(f"{context}: scale must be [min, max]")
    texts = record["texts"]
    if not isinstance(texts, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in texts.items()
    ):
        raise CorpusError(f"{context}: texts must map role names to strings")
    judge_scores = record.get("judge_scores") or {}
    return Instance(
        id=str(record["id"]),
        task=task,
        metric=metric,
        dataset_name=str(record["dataset"]),
        texts=dict(texts),
        human_score=_as_fraction(record["human_score"], f"{context}: human_score"),
        score_scale=(
            _as_fraction(scale[0], f"{context}: scale min"),
            _as_fraction(scale[1], f"{context}: scale max"),
        ),
        judge_scores={
            str(j): _as_fraction(s, f"{context}: judge {j!r}") for j, s in judge_scores.items()
        },
    )


def ingest(path: str | Path, format: str = "jsonl") -> list[Instance]:
    """Parse a corpus file; one JSON object per line, duplicate ids rejected."""
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    path = Path(path)
    instances: list[Instance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            context = f"{path.name}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{context}: invalid JSON: {exc}") from exc
            inst = instance_from_record(record, context)
            if inst.id in seen:
                raise CorpusError(f"{context}: duplicate instance id {inst.id!r}")
            seen.add(inst.id)
            instances.append(inst)
    return instances


def write_corpus(path: str | Path, instances: list[Instance]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), sort_keys=True))
            fh.write("\n")


def normalize(raw: Fraction | int | float, scale: tuple[Fraction, Fraction]) -> float:
    """Min-max map onto [0, 1]; exact in Fraction space before the float cast."""
    lo, hi = Fraction(scale[0]), Fraction(scale[1])
    if hi <= lo:
        raise CorpusError(f"degenerate scale [{lo}, {hi}]")
    raw = Fraction(raw)
    if not lo <= raw <= hi:
        raise CorpusError(f"score {raw} out of scale [{lo}, {hi}]")
    return float((raw - lo) / (hi - lo))


def label_reliability(human: float, judge: float, tau: float) -> int:
    """1 ("good") iff the judge is within tolerance of the human score.

    Boundary is inclusive with a tiny slack so tau=0 on discrete scales is
    not at the mercy of float rounding.
    """
    if tau < 0:
        raise ValueError(f"tolerance must be >= 0, got {tau}")
    return 1 if abs(judge - human) <= tau + TOLERANCE_EPS else 0


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    proportions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    mode: str = "stratified_by_dataset"
    held_out: str | None = None  # leave_one_source_out only

    def __post_init__(self) -> None:
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ValueError(f"proportions must sum to 1, got {self.proportions}")
        if self.mode not in ("stratified_by_dataset", "leave_one_source_out"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "leave_one_source_out" and not self.held_out:
            raise ValueError("leave_one_source_out requires held_out dataset name")


def _by_dataset(instances: list[Instance]) -> dict[str, list[Instance]]:
    groups: dict[str, list[Instance]] = {}
    for inst in instances:
        groups.setdefault(inst.dataset_name, []).append(inst)
    return groups


def split(
    instances: list[Instance], spec: SplitSpec
) -> tuple[list[Instance], list[Instance], list[Instance]]:
    """Partition into (train, validation, test).

    Stratified mode shuffles within each dataset with a seed derived from
    (seed, dataset name) and cuts at floor(n*p_train) / floor(n*p_valid),
    giving the remainder to test. Leave-one-source-out holds the named
    dataset out as the entire test set and splits the rest 75/25.
    """
    if not instances:
        raise ValueError("cannot split an empty corpus")
    groups = _by_dataset(instances)
    train: list[Instance] = []
    valid: list[Instance] = []
    test: list[Instance] = []
    if spec.mode == "leave_one_source_out":
        if spec.held_out not in groups:
            raise CorpusError(f"unknown held-out dataset {spec.held_out!r}")
        for name in sorted(groups):
            members = groups[name]
            if name == spec.held_out:
                test.extend(members)
                continue
            shuffled = list(members)
            derived_rng(spec.seed, "loso", name).shuffle(shuffled)
            n_train = int(len(shuffled) * 0.75)
            train.extend(shuffled[:n_train])
            valid.extend(shuffled[n_train:])
        return train, valid, test

    p_train, p_valid, _ = spec.proportions
    for name in sorted(groups):
        shuffled = list(groups[name])
        derived_rng(spec.seed, "split", name).shuffle(shuffled)
        n = len(shuffled)
        n_train = int(n * p_train)
        n_valid = int(n * p_valid)
        train.extend(shuffled[:n_train])
        valid.extend(shuffled[n_train : n_train + n_valid])
        test.extend(shuffled[n_train + n_valid :])
    return train, valid, test


def downsample_stratified(
    instances: list[Instance], per_dataset_cap: int, seed: int
) -> list[Instance]:
    """Cap each dataset's contribution via a seeded shuffle; order preserved."""
    if per_dataset_cap < 1:
        raise ValueError("per_dataset_cap must be >= 1")
    keep: set[str] = set()
    for name, members in _by_dataset(instances).items():
        shuffled = list(members)
        derived_rng(seed, "downsample", name).shuffle(shuffled)
        keep.update(inst.id for inst in shuffled[:per_dataset_cap])
    return [inst for inst in instances if inst.id in keep]
