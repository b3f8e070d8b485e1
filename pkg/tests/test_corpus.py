import json
from fractions import Fraction

import pytest

from dynjury.corpus import (
    CorpusError,
    Instance,
    Metric,
    SplitSpec,
    Task,
    downsample_stratified,
    ingest,
    instance_from_record,
    label_reliability,
    normalize,
    split,
    write_corpus,
)


def rag_record(i=0, dataset="ds", human=2, scale=(0, 2), **overrides):
    record = {
        "id": f"inst-{i}",
        "task": "rag",
        "metric": "groundedness",
        "dataset": dataset,
        "texts": {"question": "Why?", "context": "Because of things.", "response": "Things."},
        "human_score": human,
        "scale": list(scale),
        "judge_scores": {"j1": 1},
    }
    record.update(overrides)
    return record


def summ_record(i=0, **overrides):
    record = {
        "id": f"summ-{i}",
        "task": "summarization",
        "metric": "relevance",
        "dataset": "s",
        "texts": {"input": "A long article.", "output": "Short."},
        "human_score": 3,
        "scale": [1, 5],
        "judge_scores": {},
    }
    record.update(overrides)
    return record


class TestIngest:
    def test_valid_rag_record(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(rag_record()) + "\n")
        (inst,) = ingest(path)
        assert inst.task is Task.RAG
        assert inst.metric is Metric.GROUNDEDNESS
        assert inst.human_score == Fraction(2)
        assert inst.judge_scores["j1"] == Fraction(1)

    def test_score_out_of_scale(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(summ_record(human_score=6)) + "\n")
        with pytest.raises(CorpusError, match="out of scale"):
            ingest(path)

    def test_missing_role(self, tmp_path):
        path = tmp_path / "c.jsonl"
        record = summ_record()
        del record["texts"]["output"]
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(CorpusError, match="missing role"):
            ingest(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(rag_record(1)) + "\n" + json.dumps(rag_record(1)) + "\n")
        with pytest.raises(CorpusError, match="duplicate"):
            ingest(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(rag_record()) + "\n{not json\n")
        with pytest.raises(CorpusError, match=":2"):
            ingest(path)

    def test_judge_score_out_of_scale(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(rag_record(judge_scores={"j1": 7})) + "\n")
        with pytest.raises(CorpusError, match="out of scale"):
            ingest(path)

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "c.jsonl"
        records = [rag_record(i) for i in range(3)]
        path.write_text("".join(json.dumps(r) + "\n" for r in records))
        instances = ingest(path)
        out = tmp_path / "copy.jsonl"
        write_corpus(out, instances)
        assert ingest(out) == instances


class TestNormalize:
    def test_midpoint(self):
        assert normalize(3, (1, 5)) == 0.5

    def test_lower_bound(self):
        assert normalize(1, (1, 5)) == 0.0

    def test_upper_bound(self):
        assert normalize(2, (0, 2)) == 1.0

    def test_degenerate_scale_error(self):
        with pytest.raises(CorpusError):
            normalize(1, (2, 2))

    def test_out_of_range_error(self):
        with pytest.raises(CorpusError):
            normalize(9, (1, 5))

    def test_order_preserving(self):
        values = [Fraction(k, 7) for k in range(8)]
        normalized = [normalize(v, (0, 1)) for v in values]
        assert all(a < b for a, b in zip(normalized, normalized[1:]))


class TestLabelReliability:
    def test_exact_match(self):
        assert label_reliability(0.5, 0.5, 0.0) == 1

    def test_inclusive_boundary(self):
        assert label_reliability(0.5, 0.75, 0.25) == 1

    def test_outside_tolerance(self):
        assert label_reliability(0.0, 0.5, 0.25) == 0

    def test_symmetric(self):
        assert label_reliability(0.2, 0.6, 0.3) == label_reliability(0.6, 0.2, 0.3)

    def test_monotone_in_tau(self):
        for tau in (0.0, 0.1, 0.2, 0.5, 1.0):
            if label_reliability(0.3, 0.62, tau):
                assert label_reliability(0.3, 0.62, tau + 0.2) == 1

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            label_reliability(0.5, 0.5, -0.1)


def make_instances(sizes: dict[str, int]):
    out = []
    i = 0
    for dataset, n in sizes.items():
        for _ in range(n):
            out.append(instance_from_record(rag_record(i, dataset=dataset)))
            i += 1
    return out


class TestSplit:
    def test_proportions(self):
        instances = make_instances({"only": 100})
        train, valid, test = split(instances, SplitSpec(seed=7))
        assert (len(train), len(valid), len(test)) == (60, 20, 20)

    def test_deterministic(self):
        instances = make_instances({"a": 40, "b": 25})
        spec = SplitSpec(seed=7)
        first = tuple(tuple(i.id for i in part) for part in split(instances, spec))
        second = tuple(tuple(i.id for i in part) for part in split(instances, spec))
        assert first == second

    def test_disjoint_and_exhaustive(self):
        instances = make_instances({"a": 33, "b": 17})
        train, valid, test = split(instances, SplitSpec(seed=1))
        ids = [i.id for i in train + valid + test]
        assert len(ids) == len(set(ids)) == len(instances)

    def test_stratified_within_one_instance(self):
        instances = make_instances({"a": 31, "b": 22, "c": 47})
        train, valid, test = split(instances, SplitSpec(seed=3))
        for dataset, total in (("a", 31), ("b", 22), ("c", 47)):
            n_train = sum(1 for i in train if i.dataset_name == dataset)
            assert abs(n_train - 0.6 * total) <= 1

    def test_leave_one_source_out(self):
        instances = make_instances({"ASQA": 50, "ALCE": 50})
        spec = SplitSpec(seed=0, mode="leave_one_source_out", held_out="ASQA")
        train, valid, test = split(instances, spec)
        assert len(test) == 50
        assert all(i.dataset_name == "ASQA" for i in test)
        assert len(train) == 37 and len(valid) == 13  # 75/25 of the rest

    def test_leave_one_source_out_unknown(self):
        instances = make_instances({"a": 5})
        with pytest.raises(CorpusError, match="unknown held-out"):
            split(instances, SplitSpec(seed=0, mode="leave_one_source_out", held_out="zz"))

    def test_different_seed_differs(self):
        instances = make_instances({"a": 50})
        ids_a = [i.id for i in split(instances, SplitSpec(seed=1))[0]]
        ids_b = [i.id for i in split(instances, SplitSpec(seed=2))[0]]
        assert ids_a != ids_b

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            split([], SplitSpec(seed=0))

    def test_bad_proportions_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec(seed=0, proportions=(0.5, 0.2, 0.2))


class TestDownsample:
    def test_cap_semantics(self):
        instances = make_instances({"A": 30, "B": 5})
        out = downsample_stratified(instances, 10, seed=0)
        counts = {}
        for inst in out:
            counts[inst.dataset_name] = counts.get(inst.dataset_name, 0) + 1
        assert counts == {"A": 10, "B": 5}

    def test_identity_when_cap_large(self):
        instances = make_instances({"A": 4, "B": 5})
        assert downsample_stratified(instances, 100, seed=0) == instances

    def test_deterministic(self):
        instances = make_instances({"A": 30})
        first = [i.id for i in downsample_stratified(instances, 7, seed=9)]
        second = [i.id for i in downsample_stratified(instances, 7, seed=9)]
        assert first == second

    def test_bad_cap(self):
        with pytest.raises(ValueError):
            downsample_stratified(make_instances({"A": 3}), 0, seed=0)


class TestInstance:
    def test_normalized_helpers(self):
        inst = instance_from_record(rag_record(human=1))
        assert inst.human_normalized == 0.5
        assert inst.judge_normalized("j1") == 0.5

    def test_missing_judge_error(self):
        inst = instance_from_record(rag_record())
        with pytest.raises(CorpusError, match="no score"):
            inst.judge_normalized("nobody")

    def test_rag_roles_enforced(self):
        record = rag_record()
        record["texts"] = {"input": "x", "output": "y"}
        with pytest.raises(CorpusError):
            instance_from_record(record)

    def test_fraction_exactness(self):
        inst = instance_from_record(rag_record(human_score=0.5, scale=[0, 2]))
        assert inst.human_score == Fraction(1, 2)
