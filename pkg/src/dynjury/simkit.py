"""Synthetic corpora with known structure: text lengths span the tertiles
used in binned analyses, human scores are drawn from the task scale, and
judges are accurate inside feature-defined competence regions with known
probability. Everything derives from per-instance seeds, so generation is
order-independent and byte-reproducible."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import lexicons
from .corpus import Instance, Metric, Task
from .embedfeat import HashEmbedder
from .judges import SyntheticJudgeSpec, synthetic_score
from .textfeat import extract_text_features
from .util import derived_rng


def build_vocabulary(seed: int, size: int = 400) -> list[str]:
    """Seeded mix of real common words and generated filler words."""
    base = sorted(
        set(lexicons.COMMON_NOUNS)
        | set(lexicons.VERB_FORMS)
        | set(lexicons.SENTIMENT_LEXICON)
        | set(lexicons.MODALITY_VERBS)
        | {"the", "a", "and", "of", "to", "in", "it", "that", "was", "for", "on", "with"}
    )
    rng = derived_rng(seed, "vocabulary")
    words = list(base)
    onsets = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
    nuclei = ["a", "e", "i", "o", "u", "ar", "en", "or"]
    while len(words) < size:
        word = "".join(rng.choice(onsets) + rng.choice(nuclei) for _ in range(rng.randint(2, 4)))
        if word not in words:
            words.append(word)
    rng.shuffle(words)
    return words[:size]


@dataclass(frozen=True)
class Scenario:
    n_instances: int
    task: Task = Task.RAG
    metric: Metric = Metric.GROUNDEDNESS
    dataset_names: tuple[str, ...] = ("synth-a", "synth-b", "synth-c")
    vocabulary_size: int = 400
    # words per generated-output band: spans the low/medium/high tertiles
    length_bands: tuple[tuple[int, int], ...] = ((20, 40), (60, 100), (140, 220))
    judge_specs: tuple[SyntheticJudgeSpec, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")
        if len(self.judge_specs) < 3:
            raise ValueError("need at least 3 judges so 2 <= K <= N-1 is nonempty")
        ids = [s.judge_id for s in self.judge_specs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"conflicting judge ids: {ids}")

    @property
    def scale(self) -> tuple[int, int]:
        return (1, 5) if self.task is Task.SUMMARIZATION else (0, 2)

    def to_json(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "task": self.task.value,
            "metric": self.metric.value,
            "dataset_names": list(self.dataset_names),
            "vocabulary_size": self.vocabulary_size,
            "length_bands": [list(b) for b in self.length_bands],
            "judge_specs": [s.to_json() for s in self.judge_specs],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        return cls(
            n_instances=int(obj["n_instances"]),
            task=Task(obj.get("task", "rag")),
            metric=Metric(obj.get("metric", "groundedness")),
            dataset_names=tuple(obj.get("dataset_names") or ("synth-a",)),
            vocabulary_size=int(obj.get("vocabulary_size", 400)),
            length_bands=tuple(tuple(b) for b in obj.get("length_bands") or ((20, 40), (60, 100), (140, 220))),
            judge_specs=tuple(SyntheticJudgeSpec.from_json(s) for s in obj.get("judge_specs") or ()),
            seed=int(obj.get("seed", 0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))


def _sentence(rng, vocab: list[str], n_words: int, question: bool = False) -> str:
    words = [rng.choice(vocab) for _ in range(max(n_words, 1))]
    words[0] = words[0].capitalize()
    return " ".join(words) + ("?" if question else ".")


def _passage(rng, vocab: list[str], n_words: int, paragraph_chance: float = 0.1) -> str:
    sentences = []
    remaining = n_words
    while remaining > 0:
        take = min(rng.randint(4, 12), remaining)
        sentences.append(_sentence(rng, vocab, take))
        remaining -= take
        if remaining > 0 and rng.random() < paragraph_chance:
            sentences.append("\n\n")
    text = " ".join(sentences).replace(" \n\n ", "\n\n")
    return text


def _instance_texts(rng, vocab: list[str], task: Task, band: tuple[int, int]) -> dict[str, str]:
    out_words = rng.randint(band[0], band[1])
    if task is Task.SUMMARIZATION:
        return {
            "input": _passage(rng, vocab, rng.randint(150, 300)),
            "output": _passage(rng, vocab, out_words),
        }
    return {
        "question": _sentence(rng, vocab, rng.randint(5, 12), question=True),
        "context": _passage(rng, vocab, rng.randint(40, 90)),
        "response": _passage(rng, vocab, out_words),
    }


def generate(scenario: Scenario) -> list[Instance]:
    """Instances with judge scores filled per the synthetic judge specs."""
    lo, hi = scenario.scale
    vocab = build_vocabulary(scenario.seed, scenario.vocabulary_size)
    embedder = HashEmbedder()
    instances: list[Instance] = []
    for i in range(scenario.n_instances):
        rng = derived_rng(scenario.seed, "instance", i)
        band = scenario.length_bands[rng.randrange(len(scenario.length_bands))]
        texts = _instance_texts(rng, vocab, scenario.task, band)
        human = rng.randint(lo, hi)
        inst = Instance(
            id=f"sim-{i:05d}",
            task=scenario.task,
            metric=scenario.metric,
            dataset_name=rng.choice(scenario.dataset_names),
            texts=texts,
            human_score=Fraction(human),
            score_scale=(Fraction(lo), Fraction(hi)),
        )
        features = extract_text_features(texts, embedder).as_dict()
        scores = {}
        for spec in scenario.judge_specs:
            if spec.feature_name not in features:
                raise ValueError(
                    f"judge {spec.judge_id!r} predicate feature {spec.feature_name!r} "
                    "is not produced by the generator"
                )
            scores[spec.judge_id] = Fraction(
                synthetic_score(spec, inst, features[spec.feature_name])
            )
        instances.append(
            Instance(
                id=inst.id,
                task=inst.task,
                metric=inst.metric,
                dataset_name=inst.dataset_name,
                texts=texts,
                human_score=inst.human_score,
                score_scale=inst.score_scale,
                judge_scores=scores,
            )
        )
    return instances


def default_contrastive_scenario(
    n_instances: int = 1200, seed: int = 0
) -> Scenario:
    """Six judges over RAG groundedness: two reliable on short responses,
    two on long responses, two mediocre everywhere. Cutoffs sit between
    the character-count bands the generator produces."""
    short_cut = 400.0
    long_cut = 750.0
    specs = (
        SyntheticJudgeSpec("judge-short-1", "response_COUNT_CHAR", "<=", short_cut, 0.9, 0.15, seed),
        SyntheticJudgeSpec("judge-short-2", "response_COUNT_CHAR", "<=", short_cut, 0.9, 0.15, seed),
        SyntheticJudgeSpec("judge-long-1", "response_COUNT_CHAR", ">=", long_cut, 0.9, 0.15, seed),
        SyntheticJudgeSpec("judge-long-2", "response_COUNT_CHAR", ">=", long_cut, 0.9, 0.15, seed),
        SyntheticJudgeSpec("judge-mid-1", "response_COUNT_CHAR", ">=", 0.0, 0.5, 0.5, seed),
        SyntheticJudgeSpec("judge-mid-2", "response_COUNT_CHAR", ">=", 0.0, 0.5, 0.5, seed),
    )
    return Scenario(n_instances=n_instances, judge_specs=specs, seed=seed)
