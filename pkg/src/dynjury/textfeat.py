"""Per-role text features: size, special-word, and complexity signals.

Tokenization is rule-based and versioned so the same text always produces
the same vector. Undefined ratios become 0.0 plus a warning flag rather
than NaN; classifier inputs must stay finite.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import lexicons
from .corpus import Instance, Task
from .util import fmt_float

TOKENIZATION_POLICY_VERSION = "v1"

_WORD_RE = re.compile(r"[A-Za-z0-9']+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.?!])\s+")
_PARAGRAPH_SPLIT_RE = re.compile(r"\n\s*\n")
_NUMBER_RE = re.compile(r"\d[\d,./:%-]*")
_MONEY_RE = re.compile(r"[$€£]\s?\d[\d,.]*")
_PERCENT_RE = re.compile(r"\d+(?:\.\d+)?%")
_TIME_RE = re.compile(r"\b\d{1,2}:\d{2}\b")
_DATE_RE = re.compile(r"\b\d{4}-\d{2}-\d{2}\b")
_VOWEL_RUN_RE = re.compile(r"[aeiouy]+")


@dataclass(frozen=True)
class TokenizationPolicy:
    word_rule: str = "letters-digits-apostrophes"
    sentence_rule: str = "terminator-then-space"
    paragraph_rule: str = "blank-line"
    version: str = TOKENIZATION_POLICY_VERSION


POLICY = TokenizationPolicy()


def word_tokens(text: str, lowercase: bool = True) -> list[str]:
    """Maximal runs of letters/digits/apostrophes; apostrophes trimmed at the edges."""
    out = []
    for tok in _WORD_RE.findall(text):
        tok = tok.strip("'")
        if tok:
            out.append(tok.lower() if lowercase else tok)
    return out


def sentence_spans(text: str) -> list[str]:
    """Split on . ? ! followed by whitespace or end; drops empty segments."""
    parts = _SENTENCE_SPLIT_RE.split(text.strip())
    return [p.strip() for p in parts if p.strip()]


def paragraphs(text: str) -> list[str]:
    parts = _PARAGRAPH_SPLIT_RE.split(text.strip())
    return [p for p in (p.strip() for p in parts) if p]


def syllable_count(word: str) -> int:
    """Vowel-group heuristic: maximal aeiouy runs, silent trailing e dropped."""
    w = word.lower().strip("'")
    if not w:
        return 0
    runs = _VOWEL_RUN_RE.findall(w)
    count = len(runs)
    if count > 1 and w.endswith("e") and len(w) >= 2 and w[-2] not in "aeiouy":
        count -= 1
    return max(count, 1)


def flesch_reading_ease(n_words: int, n_sentences: int, n_syllables: int) -> float:
    return 206.835 - 1.015 * (n_words / n_sentences) - 84.6 * (n_syllables / n_words)


def heuristic_entity_count(text: str) -> int:
    """Capitalized runs (sentence-initial singletons excluded) plus
    date/time/percent/money patterns. Crude stand-in for a real tagger."""
    count = 0
    for sentence in sentence_spans(text):
        tokens = word_tokens(sentence, lowercase=False)
        run_len = 0
        run_start = -1
        for idx, tok in enumerate(tokens + [""]):
            if tok and tok[0].isupper():
                if run_len == 0:
                    run_start = idx
                run_len += 1
                continue
            if run_len:
                if not (run_start == 0 and run_len == 1):
                    count += 1
                run_len = 0
    for pattern in (_MONEY_RE, _PERCENT_RE, _TIME_RE, _DATE_RE):
        count += len(pattern.findall(text))
    return count


EntityCounter = Callable[[str], int]


@dataclass(frozen=True)
class FeatureVector:
    """Named, role-prefixed features for one instance."""

    names: tuple[str, ...]
    values: tuple[float, ...]
    policy_version: str = TOKENIZATION_POLICY_VERSION
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.names) != len(self.values):
            raise ValueError("names and values must be parallel")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        for name, value in zip(self.names, self.values):
            if value != value:
                raise ValueError(f"feature {name} is NaN")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name: str) -> float:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None


def concat(parts: Iterable[FeatureVector]) -> FeatureVector:
    names: list[str] = []
    values: list[float] = []
    warnings: list[str] = []
    for part in parts:
        names.extend(part.names)
        values.extend(part.values)
        warnings.extend(part.warnings)
    return FeatureVector(tuple(names), tuple(values), warnings=tuple(warnings))


SIZE_FEATURES = (
    "COUNT_WORD",
    "COUNT_CHAR",
    "COUNT_SENTENCE",
    "COUNT_PARAGRAPH",
    "NUM_WORD_SENTENCE",
    "NUM_CHAR_WORD",
)
COMPRESSION_FEATURES = ("CHAR_COMPRESSION", "WORD_COMPRESSION")
SPECIAL_FEATURES = (
    "DIFFICULT_WORD",
    "STOP_WORDS",
    "MODALITY",
    "NUMBER_COUNT",
    "NAMED_ENTITY",
    "FACTUAL_DENSISTY",  # name kept as published
    "NGRAM_COUNT",
    "NEGATION_SENTENCE",
    "COUNT_QUESTION",
)
COMPLEXITY_FEATURES = (
    "TOKEN_ENTROPY",
    "LEXICAL_DIVERSITY",
    "READING_INDEX",
    "NGRAM_REPETITION",
    "SENTENCE_SIMILARITY",
    "SYNTACTIC_AMBIGUITY",
    "SEMANTIC_AMBIGUITY",
    "COREFERENCE_CHAIN",
    "COREFERENCE_AMBIGUOUS",
    "SYNTACTIC_ANOMALY",
    "RHETORICAL_STRUCTURE",
    "POLARITY",
    "SUBJECTIVITY",
)


def _role_order(texts: dict[str, str]) -> tuple[Task, tuple[str, ...]]:
    have = set(texts)
    for task in (Task.SUMMARIZATION, Task.RAG):
        if have == set(task.roles):
            return task, task.roles
    raise ValueError(f"text roles {sorted(have)} match no known task")


def extract_size_features(texts: dict[str, str]) -> FeatureVector:
    task, roles = _role_order(texts)
    names: list[str] = []
    values: list[float] = []
    warnings: list[str] = []
    for role in roles:
        text = texts[role]
        toks = word_tokens(text)
        sents = sentence_spans(text)
        n_words = len(toks)
        n_chars = len(text)
        n_sents = len(sents)
        row = {
            "COUNT_WORD": float(n_words),
            "COUNT_CHAR": float(n_chars),
            "COUNT_SENTENCE": float(n_sents),
            "COUNT_PARAGRAPH": float(len(paragraphs(text))),
            "NUM_WORD_SENTENCE": n_words / n_sents if n_sents else 0.0,
            "NUM_CHAR_WORD": sum(len(t) for t in toks) / n_words if n_words else 0.0,
        }
        for feat in SIZE_FEATURES:
            names.append(f"{role}_{feat}")
            values.append(row[feat])
        if role == task.output_role:
            src = texts[task.source_role]
            src_chars = len(src)
            src_words = len(word_tokens(src))
            if src_chars:
                char_comp = n_chars / src_chars
            else:
                char_comp = 0.0
                warnings.append(f"{role}_CHAR_COMPRESSION:zero-denominator")
            if src_words:
                word_comp = n_words / src_words
            else:
                word_comp = 0.0
                warnings.append(f"{role}_WORD_COMPRESSION:zero-denominator")
            names.extend([f"{role}_CHAR_COMPRESSION", f"{role}_WORD_COMPRESSION"])
            values.extend([char_comp, word_comp])
    return FeatureVector(tuple(names), tuple(values), warnings=tuple(warnings))


def _is_negation(token: str) -> bool:
    return token in lexicons.NEGATION_WORDS or token.endswith("n't")


def extract_special_word_features(
    texts: dict[str, str], entity_counter: EntityCounter = heuristic_entity_count
) -> FeatureVector:
    _, roles = _role_order(texts)
    names: list[str] = []
    values: list[float] = []
    for role in roles:
        text = texts[role]
        toks = word_tokens(text)
        sents = sentence_spans(text)
        n_words = len(toks)
        entities = entity_counter(text)
        questions = sum(1 for s in sents if s.endswith("?")) + (
            1 if text.strip().endswith("?") and not sents else 0
        )
        row = {
            "DIFFICULT_WORD": float(sum(1 for t in toks if syllable_count(t) > 2)),
            "STOP_WORDS": float(sum(1 for t in toks if t in lexicons.STOP_WORDS)),
            "MODALITY": float(sum(1 for t in toks if t in lexicons.MODALITY_VERBS)),
            "NUMBER_COUNT": float(len(_NUMBER_RE.findall(text))),
            "NAMED_ENTITY": float(entities),
            "FACTUAL_DENSISTY": entities / n_words if n_words else 0.0,
            "NGRAM_COUNT": float(max(0, n_words - 2)),
            "NEGATION_SENTENCE": float(
                sum(1 for s in sents if any(_is_negation(t) for t in word_tokens(s)))
            ),
            "COUNT_QUESTION": float(questions),
        }
        for feat in SPECIAL_FEATURES:
            names.append(f"{role}_{feat}")
            values.append(row[feat])
    return FeatureVector(tuple(names), tuple(values))


def token_entropy_bits(tokens: Sequence[str]) -> float:
    if not tokens:
        return 0.0
    counts = Counter(tokens)
    total = len(tokens)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def _trigrams(tokens: Sequence[str]) -> list[tuple[str, str, str]]:
    return [tuple(tokens[i : i + 3]) for i in range(len(tokens) - 2)]


def _mean_pairwise_cosine(vectors: list) -> float:
    import numpy as np

    n = len(vectors)
    if n < 2:
        return 1.0
    arr = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(arr, axis=1)
    total = 0.0
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            denom = norms[i] * norms[j]
            total += float(arr[i] @ arr[j] / denom) if denom else 0.0
            pairs += 1
    return total / pairs


def _has_plausible_subject(tokens_cased: Sequence[str]) -> bool:
    for tok in tokens_cased:
        low = tok.lower()
        if low in lexicons.PRONOUNS or low in lexicons.COMMON_NOUNS:
            return True
        if tok[0].isupper():
            return True
    return False


def extract_complexity_features(texts: dict[str, str], embedder) -> FeatureVector:
    _, roles = _role_order(texts)
    names: list[str] = []
    values: list[float] = []
    for role in roles:
        text = texts[role]
        toks = word_tokens(text)
        sents = sentence_spans(text)
        n_words = len(toks)
        n_sents = len(sents)
        grams = _trigrams(toks)

        if n_words and n_sents:
            syllables = sum(syllable_count(t) for t in toks)
            reading = flesch_reading_ease(n_words, n_sents, syllables)
        else:
            reading = 0.0

        sent_tokens = [word_tokens(s) for s in sents]
        sent_tokens_cased = [word_tokens(s, lowercase=False) for s in sents]
        ambiguity_terms = lexicons.PREPOSITIONS | {"to"}
        syntactic_ambiguity = (
            sum(sum(1 for t in st if t in ambiguity_terms) for st in sent_tokens) / n_sents
            if n_sents
            else 0.0
        )
        pronoun_counts = [sum(1 for t in st if t in lexicons.PRONOUNS) for st in sent_tokens]
        anomalies = 0
        for st, stc in zip(sent_tokens, sent_tokens_cased):
            has_verb = any(t in lexicons.VERB_FORMS for t in st)
            if not has_verb or not _has_plausible_subject(stc):
                anomalies += 1
        lowered_sents = [s.lower() for s in sents]
        rhetorical = sum(
            1
            for s, st in zip(lowered_sents, sent_tokens)
            if any(t in lexicons.DISCOURSE_MARKERS for t in st)
            or any(phrase in s for phrase in lexicons.DISCOURSE_PHRASES)
        )
        matched = [lexicons.SENTIMENT_LEXICON[t] for t in toks if t in lexicons.SENTIMENT_LEXICON]
        polarity = sum(m[0] for m in matched) / len(matched) if matched else 0.0
        subjectivity = sum(m[1] for m in matched) / len(matched) if matched else 0.0

        if len(sents) >= 2:
            sentence_similarity = _mean_pairwise_cosine([embedder.embed(s) for s in sents])
        else:
            sentence_similarity = 1.0

        row = {
            "TOKEN_ENTROPY": token_entropy_bits(toks),
            "LEXICAL_DIVERSITY": len(set(toks)) / n_words if n_words else 0.0,
            "READING_INDEX": reading,
            "NGRAM_REPETITION": (len(grams) - len(set(grams))) / len(grams) if grams else 0.0,
            "SENTENCE_SIMILARITY": sentence_similarity,
            "SYNTACTIC_AMBIGUITY": syntactic_ambiguity,
            "SEMANTIC_AMBIGUITY": (
                sum(lexicons.WORD_SENSE_COUNTS.get(t, 1) for t in toks) / n_words
                if n_words
                else 0.0
            ),
            "COREFERENCE_CHAIN": sum(pronoun_counts) / n_sents if n_sents else 0.0,
            "COREFERENCE_AMBIGUOUS": float(sum(1 for c in pronoun_counts if c > 1)),
            "SYNTACTIC_ANOMALY": float(anomalies),
            "RHETORICAL_STRUCTURE": float(rhetorical),
            "POLARITY": polarity,
            "SUBJECTIVITY": subjectivity,
        }
        for feat in COMPLEXITY_FEATURES:
            names.append(f"{role}_{feat}")
            values.append(row[feat])
    return FeatureVector(tuple(names), tuple(values))


def extract_text_features(
    texts: dict[str, str],
    embedder,
    entity_counter: EntityCounter = heuristic_entity_count,
) -> FeatureVector:
    """All size + special-word + complexity features, grouped by role family."""
    return concat(
        [
            extract_size_features(texts),
            extract_special_word_features(texts, entity_counter),
            extract_complexity_features(texts, embedder),
        ]
    )


@dataclass
class FeatureExtractor:
    """Full feature pipeline: text features plus fitted embedding features.

    The embedding block (per-role PCA projections and topic similarities)
    must be fitted on the training split only; `fit` does that and
    `extract` then works for any instance of the same task.
    """

    embedder: object
    pca_components: int = 10
    entity_counter: EntityCounter = heuristic_entity_count
    embedding_model: object | None = field(default=None)

    def fit(self, train_instances: Sequence[Instance]) -> "FeatureExtractor":
        from .embedfeat import EmbeddingFeatureModel

        self.embedding_model = EmbeddingFeatureModel.fit(
            self.embedder,
            [inst.texts for inst in train_instances],
            n_components=self.pca_components,
        )
        return self

    def extract(self, instance: Instance) -> FeatureVector:
        return extract_all(
            instance,
            self.embedder,
            embedding_model=self.embedding_model,
            entity_counter=self.entity_counter,
        )

    def matrix(self, instances: Sequence[Instance]):
        """(ids, feature names, 2-D float array) for a batch of instances."""
        import numpy as np

        vectors = [self.extract(inst) for inst in instances]
        names = vectors[0].names
        for inst, vec in zip(instances, vectors):
            if vec.names != names:
                raise ValueError(f"instance {inst.id}: inconsistent feature names")
        ids = [inst.id for inst in instances]
        return ids, names, np.array([v.values for v in vectors], dtype=float)


def extract_all(
    instance: Instance,
    embedder,
    embedding_model=None,
    entity_counter: EntityCounter = heuristic_entity_count,
) -> FeatureVector:
    """Text features for every role, then embedding features for every role."""
    parts = [extract_text_features(instance.texts, embedder, entity_counter)]
    if embedding_model is not None:
        parts.append(embedding_model.transform(instance.texts))
    return concat(parts)


class CorpusFeatureCache:
    """Text features and raw role embeddings computed once for a corpus.

    Split-dependent work (fitting per-role PCA on the training rows and
    projecting everything) is then a few matrix products per seed instead
    of a full re-extraction.
    """

    def __init__(
        self,
        instances: Sequence[Instance],
        embedder,
        pca_components: int = 10,
        entity_counter: EntityCounter = heuristic_entity_count,
        drop_groups: Sequence[str] = (),
    ):
        import numpy as np

        from .embedfeat import TopicSet

        if not instances:
            raise ValueError("empty corpus")
        tasks = {inst.task for inst in instances}
        if len(tasks) != 1:
            raise ValueError("feature cache requires a single-task corpus")
        self.instances = list(instances)
        self.task = next(iter(tasks))
        self.roles = self.task.roles
        self.embedder = embedder
        self.pca_components = pca_components
        self.index = {inst.id: i for i, inst in enumerate(self.instances)}
        self.drop_groups = validate_drop_groups(drop_groups)

        vectors = [
            extract_text_features(inst.texts, embedder, entity_counter)
            for inst in self.instances
        ]
        self.text_names = vectors[0].names
        for inst, vec in zip(self.instances, vectors):
            if vec.names != self.text_names:
                raise ValueError(f"instance {inst.id}: inconsistent feature names")
        self.text_matrix = np.array([v.values for v in vectors], dtype=float)
        self.embeddings = {
            role: np.array([embedder.embed(inst.texts[role]) for inst in self.instances])
            for role in self.roles
        }
        self.topics = TopicSet.build(embedder)
        self.topic_sims = {
            role: self._cosine_block(self.embeddings[role], self.topics.vectors)
            for role in self.roles
        }

    @staticmethod
    def _cosine_block(rows, topics):
        import numpy as np

        row_norms = np.linalg.norm(rows, axis=1, keepdims=True)
        topic_norms = np.linalg.norm(topics, axis=1, keepdims=True)
        safe_rows = np.where(row_norms == 0, 1.0, row_norms)
        safe_topics = np.where(topic_norms == 0, 1.0, topic_norms)
        sims = (rows / safe_rows) @ (topics / safe_topics).T
        sims[row_norms[:, 0] == 0] = 0.0
        return sims

    def fit_embedding_model(self, train_indices: Sequence[int]):
        from .embedfeat import EmbeddingFeatureModel

        idx = list(train_indices)
        vectors_by_role = {role: self.embeddings[role][idx] for role in self.roles}
        return EmbeddingFeatureModel.fit_from_vectors(
            self.embedder, vectors_by_role, self.pca_components, topics=self.topics
        )

    def feature_names(self, embedding_model) -> tuple[str, ...]:
        names = list(self.text_names)
        if "embedding" not in self.drop_groups:
            names.extend(embedding_model.feature_names(self.roles))
        return tuple(self._apply_drop(names))

    def _apply_drop(self, names: Sequence[str]) -> list[str]:
        return [n for n in names if feature_group(n) not in self.drop_groups]

    def matrix(self, indices: Sequence[int], embedding_model):
        """(names, X) for the given instance indices under a fitted model."""
        import numpy as np

        idx = list(indices)
        blocks = [self.text_matrix[idx]]
        names = list(self.text_names)
        if "embedding" not in self.drop_groups:
            for role in self.roles:
                pca = embedding_model.pca_by_role[role]
                centered = self.embeddings[role][idx] - pca.mean
                blocks.append(centered @ pca.components.T)
                blocks.append(self.topic_sims[role][idx])
                names.extend(f"{role}_pca_{i}" for i in range(1, pca.n_components + 1))
                names.extend(f"{role}_embedding_similarity_{t}" for t in self.topics.names)
        X = np.hstack(blocks)
        keep = [i for i, n in enumerate(names) if feature_group(n) not in self.drop_groups]
        return tuple(names[i] for i in keep), X[:, keep]

    def indices_of(self, instances: Sequence[Instance]) -> list[int]:
        return [self.index[inst.id] for inst in instances]


FEATURE_GROUPS = ("size_special", "complexity", "embedding")


def feature_group(name: str) -> str:
    """Ablation group of a role-prefixed feature name."""
    bare = name.split("_", 1)[1] if "_" in name else name
    if bare in COMPLEXITY_FEATURES:
        return "complexity"
    if bare in SIZE_FEATURES or bare in COMPRESSION_FEATURES or bare in SPECIAL_FEATURES:
        return "size_special"
    return "embedding"


def validate_drop_groups(groups: Sequence[str]) -> frozenset[str]:
    unknown = [g for g in groups if g not in FEATURE_GROUPS]
    if unknown:
        raise ValueError(f"unknown feature group(s) {unknown}; valid: {FEATURE_GROUPS}")
    return frozenset(groups)


def export_feature_csv(path: str | Path, ids: Sequence[str], names: Sequence[str], matrix) -> None:
    """Feature matrix as CSV: header of names, id first, 12 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["id"] + list(names)) + "\n")
        for row_id, row in zip(ids, matrix):
            fh.write(",".join([row_id] + [fmt_float(v) for v in row]) + "\n")
