"""Judge score acquisition: prompt rendering, score parsing, a generic HTTP
chat client, cached replay, and synthetic judges for oracle testing.

HTTP wire shape: request {"system", "user", "model", "temperature"},
response {"text": "<score>\\n<explanation>"}. Auth token read from
JUDGE_API_KEY_<JUDGE_ID> when present.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .corpus import Instance, Metric, Task
from .util import derived_rng

SYSTEM_PROMPT = (
    "You are a helpful, respectful and honest assistant. Follow instructions "
    "attentively. Do not add any extraneous information."
)

_SUMMARIZATION_USER = """You will be given an input context followed by a corresponding summary. Your task is to evaluate the quality of the summary with respect to {metric}.

{definition}

Provide a score for this summary on a scale from 1 (worst) to 5 (best). Valid scores are: 1, 2, 3, 4, or 5.

Output format:
[score number](on its own line, only one number here, no brackets or letters or 'score:')
[explanation](starting on the next line)

Conversation: {source}
Summary: {output}"""

_RAG_USER = """You will be given a question ('Question' below) followed by a response ('Response' below) for the question. After that, cited background information is provided ('Context' below). The response was generated by a LLM based on the cited background information. Your task is to evaluate the quality of the response with respect to {metric}.

{definition}

Provide a score for the response on a scale of 0 (bad), 1 (fair), or 2 (good). Valid scores are: 0, 1, or 2.

Output format:
[score number](on its own line, only one number here, no brackets or letters or 'score:')
[explanation](starting on the next line)

Question: {question}

Response: {response}

Context: {cited text}"""

_DEFINITIONS: dict[tuple[Task, Metric], str] = {
    (Task.SUMMARIZATION, Metric.GROUNDEDNESS): (
        "Definition of Groundedness: Groundedness refers to how well the summary "
        "is supported by the content of the input context. A grounded summary "
        "should accurately reflect the information presented in the input context "
        "without introducing unsupported claims."
    ),
    (Task.SUMMARIZATION, Metric.RELEVANCE): (
        "Definition of Relevance: Relevance refers to the degree to which the "
        "summary includes only essential and contextually appropriate information "
        "from the input context, avoiding extraneous or off-topic content."
    ),
    (Task.SUMMARIZATION, Metric.COMPLETENESS): (
        "Definition of Completeness: Completeness refers to whether the summary "
        "includes all critical information from the input context, ensuring "
        "comprehensive coverage."
    ),
    (Task.RAG, Metric.GROUNDEDNESS): (
        "Definition of Groundedness: Groundedness refers to how well the response "
        "is supported by the content of the cited background information. A "
        "grounded response should accurately reflect the cited background "
        "information without introducing unsupported claims."
    ),
    (Task.RAG, Metric.RELEVANCE): (
        "Definition of Relevance: Relevance refers to how closely and thoroughly "
        "the cited background information addresses the posed question. A relevant "
        "context is clearly focused on the question and provides sufficient "
        "information to support a complete and accurate answer."
    ),
    (Task.RAG, Metric.COMPLETENESS): (
        "Definition of Completeness: Completeness refers to whether the response "
        "includes all critical information needed to fully answer the question, "
        "ensuring comprehensive coverage."
    ),
}

_PLACEHOLDER_ROLES: dict[Task, dict[str, str]] = {
    Task.SUMMARIZATION: {"{source}": "input", "{output}": "output"},
    Task.RAG: {"{question}": "question", "{response}": "response", "{cited text}": "context"},
}


class JudgeError(RuntimeError):
    pass


class ScoreParseError(JudgeError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    task: Task
    metric: Metric
    system_text: str
    user_text: str
    scale: tuple[int, int]


def make_template(task: Task, metric: Metric) -> PromptTemplate:
    base = _SUMMARIZATION_USER if task is Task.SUMMARIZATION else _RAG_USER
    user = base.replace("{metric}", metric.value).replace(
        "{definition}", _DEFINITIONS[(task, metric)]
    )
    scale = (1, 5) if task is Task.SUMMARIZATION else (0, 2)
    return PromptTemplate(task, metric, SYSTEM_PROMPT, user, scale)


def render_prompt(template: PromptTemplate, instance: Instance) -> tuple[str, str]:
    """Byte-exact placeholder substitution; unfilled placeholders are errors."""
    user = template.user_text
    for placeholder, role in _PLACEHOLDER_ROLES[template.task].items():
        if role not in instance.texts:
            raise JudgeError(f"instance {instance.id}: missing text role {role!r} for {placeholder}")
        user = user.replace(placeholder, instance.texts[role])
    for placeholder in _PLACEHOLDER_ROLES[template.task]:
        if placeholder in user:
            raise JudgeError(f"unfilled placeholder {placeholder} in rendered prompt")
    return template.system_text, user


def parse_score(
    response_text: str, scale: tuple[int, int], strict: bool = False
) -> tuple[int, str]:
    """First nonempty line must be an integer on the scale; the rest is the
    explanation. Lenient mode strips one bracket layer and a leading
    'score:' token, since real judges drift from the format slightly."""
    if not response_text or not response_text.strip():
        raise ScoreParseError("empty judge response")
    lines = response_text.splitlines()
    first_idx = next(i for i, line in enumerate(lines) if line.strip())
    token = lines[first_idx].strip()
    if not strict:
        lowered = token.lower()
        if lowered.startswith("score:"):
            token = token[len("score:") :].strip()
        if len(token) >= 2 and token[0] + token[-1] in ("[]", "()"):
            token = token[1:-1].strip()
    try:
        score = int(token)
    except ValueError:
        raise ScoreParseError(f"unparseable score line {lines[first_idx]!r}") from None
    lo, hi = scale
    if not lo <= score <= hi:
        raise ScoreParseError(f"score {score} outside scale [{lo}, {hi}]")
    explanation = "\n".join(lines[first_idx + 1 :]).strip()
    return score, explanation


@dataclass(frozen=True)
class SyntheticJudgeSpec:
    """Oracle judge: accurate with probability p_in inside its competence
    region (a threshold rule on one extracted feature), p_out elsewhere."""

    judge_id: str
    feature_name: str
    comparator: str  # one of < <= > >=
    cutoff: float
    p_in: float
    p_out: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError(f"need 0 <= p_out <= p_in <= 1, got {self.p_out}, {self.p_in}")
        if self.comparator not in ("<", "<=", ">", ">="):
            raise ValueError(f"unknown comparator {self.comparator!r}")

    def in_region(self, feature_value: float) -> bool:
        if self.comparator == "<":
            return feature_value < self.cutoff
        if self.comparator == "<=":
            return feature_value <= self.cutoff
        if self.comparator == ">":
            return feature_value > self.cutoff
        return feature_value >= self.cutoff

    def to_json(self) -> dict:
        return {
            "judge_id": self.judge_id,
            "feature_name": self.feature_name,
            "comparator": self.comparator,
            "cutoff": self.cutoff,
            "p_in": self.p_in,
            "p_out": self.p_out,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticJudgeSpec":
        return cls(**obj)


def _integer_scale(instance: Instance) -> tuple[int, int]:
    lo, hi = instance.score_scale
    if lo.denominator != 1 or hi.denominator != 1:
        raise JudgeError(f"instance {instance.id}: synthetic judges need an integer scale")
    return int(lo), int(hi)


def synthetic_score(spec: SyntheticJudgeSpec, instance: Instance, feature_value: float) -> int:
    """Emit the human score with the region-dependent probability, otherwise
    a uniformly random other value. The stream depends only on
    (seed, judge_id, instance id), so scoring order cannot matter."""
    lo, hi = _integer_scale(instance)
    human = int(instance.human_score)
    rng = derived_rng(spec.seed, spec.judge_id, instance.id)
    p = spec.p_in if spec.in_region(feature_value) else spec.p_out
    if rng.random() < p:
        return human
    others = [v for v in range(lo, hi + 1) if v != human]
    return rng.choice(others)


class ReplayClient:
    """Pure lookup into scores already present on the instance."""

    kind = "replay"

    def __init__(self, judge_id: str):
        self.judge_id = judge_id

    def score(self, instance: Instance) -> tuple[int, str]:
        if self.judge_id not in instance.judge_scores:
            raise JudgeError(f"instance {instance.id}: no cached score for {self.judge_id!r}")
        raw = instance.judge_scores[self.judge_id]
        return int(raw), ""


class SyntheticClient:
    kind = "synthetic"

    def __init__(self, spec: SyntheticJudgeSpec, feature_fn: Callable[[Instance], float]):
        self.spec = spec
        self.judge_id = spec.judge_id
        self.feature_fn = feature_fn

    def score(self, instance: Instance) -> tuple[int, str]:
        return synthetic_score(self.spec, instance, self.feature_fn(instance)), ""


@dataclass(frozen=True)
class HttpJudgeConfig:
    judge_id: str
    url: str
    model: str
    temperature: float = 0.0
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 1.0
    timeout: float = 60.0
    strict_parse: bool = False


class HttpJudgeClient:
    kind = "http"

    def __init__(self, config: HttpJudgeConfig, session=None):
        import requests

        self.config = config
        self.judge_id = config.judge_id
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(f"JUDGE_API_KEY_{self.judge_id.upper()}")
        return {"Authorization": f"Bearer {key}"} if key else {}

    def score(self, instance: Instance) -> tuple[int, str]:
        import requests

        template = make_template(instance.task, instance.metric)
        system, user = render_prompt(template, instance)
        payload = {
            "system": system,
            "user": user,
            "model": self.config.model,
            "temperature": self.config.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.retries):
            try:
                resp = self._session.post(
                    self.config.url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout,
                )
                resp.raise_for_status()
                text = resp.json()["text"]
                return parse_score(text, template.scale, strict=self.config.strict_parse)
            except (requests.RequestException, KeyError, ValueError, ScoreParseError) as exc:
                last_error = exc
                if attempt + 1 < self.config.retries:
                    time.sleep(self.config.backoff * (2**attempt))
        raise JudgeError(
            f"judge {self.judge_id!r} failed on instance {instance.id} "
            f"after {self.config.retries} attempts: {last_error}"
        )


@dataclass(frozen=True)
class ScoringFailure:
    instance_id: str
    judge_id: str
    error: str


def score_corpus(
    instances: Sequence[Instance],
    clients: Sequence,
    overwrite: bool = False,
) -> tuple[list[Instance], list[ScoringFailure]]:
    """Run every client over the corpus, filling judge_scores. Failed
    instances stay unscored for that judge (never imputed)."""
    failures: list[ScoringFailure] = []
    current = list(instances)
    for client in clients:
        todo = [
            (idx, inst)
            for idx, inst in enumerate(current)
            if overwrite or client.judge_id not in inst.judge_scores
        ]
        if not todo:
            continue
        max_workers = getattr(getattr(client, "config", None), "max_in_flight", 1)

        def run(item):
            idx, inst = item
            try:
                raw, _ = client.score(inst)
                return idx, Fraction(raw), None
            except JudgeError as exc:
                return idx, None, str(exc)

        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(run, todo))
        else:
            results = [run(item) for item in todo]
        for idx, raw, error in results:
            if error is not None:
                failures.append(ScoringFailure(current[idx].id, client.judge_id, error))
            else:
                current[idx] = current[idx].with_judge_score(client.judge_id, raw)
    return current, failures
