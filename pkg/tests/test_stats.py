import math
import random

import numpy as np
import pytest

from dynjury.boost import BoostParams, train
from dynjury.stats import (
    StatsError,
    bin_analysis,
    cliffs_delta,
    group_feature_diff,
    isotonic_fit,
    kendall_tau,
    permutation_importance,
    signed_rank_distribution,
    wilcoxon_one_sided,
)
from oracles import (
    cliffs_delta_bruteforce,
    isotonic_bruteforce,
    kendall_tau_bruteforce,
    wilcoxon_exact_enumeration,
)


class TestKendallTau:
    def test_perfect_concordance(self):
        assert kendall_tau([1, 2, 3], [1, 2, 3]).tau == 1.0

    def test_perfect_discordance(self):
        assert kendall_tau([1, 2, 3], [3, 2, 1]).tau == -1.0

    def test_matches_bruteforce_with_ties(self):
        rng = random.Random(42)
        for _ in range(60):
            n = rng.randint(2, 25)
            x = [rng.randint(0, 5) for _ in range(n)]
            y = [rng.randint(0, 5) for _ in range(n)]
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            assert kendall_tau(x, y).tau == pytest.approx(
                kendall_tau_bruteforce(x, y), abs=1e-12
            )

    def test_all_tied_is_error(self):
        with pytest.raises(StatsError):
            kendall_tau([1, 1, 1], [1, 2, 3])
        with pytest.raises(StatsError):
            kendall_tau([1, 2, 3], [7, 7, 7])

    def test_antisymmetric_under_reversal(self):
        x = [1, 3, 2, 5, 4]
        y = [2, 1, 4, 3, 5]
        reversed_y = [-v for v in y]
        assert kendall_tau(x, y).tau == pytest.approx(-kendall_tau(x, reversed_y).tau)

    def test_invariant_under_monotone_transform(self):
        rng = random.Random(7)
        x = [rng.random() for _ in range(15)]
        y = [rng.random() for _ in range(15)]
        base = kendall_tau(x, y).tau
        assert kendall_tau([math.exp(v) for v in x], y).tau == pytest.approx(base)
        assert kendall_tau(x, [v**3 for v in y]).tau == pytest.approx(base)

    def test_variant_reported(self):
        assert kendall_tau([1, 2], [2, 1]).variant == "tau_b"


class TestWilcoxon:
    def test_all_positive_n5(self):
        # exactly one of 32 sign patterns reaches the observed extreme
        result = wilcoxon_one_sided([2, 3, 4, 5, 6], [1, 2, 3, 4, 5])
        assert result.p_one_sided == pytest.approx(1 / 32)
        assert result.method == "exact"
        assert result.n_effective == 5

    def test_single_positive_difference(self):
        result = wilcoxon_one_sided([1, 1, 2], [1, 1, 1])
        assert result.n_effective == 1
        assert result.p_one_sided == pytest.approx(0.5)

    def test_zero_differences_dropped(self):
        result = wilcoxon_one_sided([1, 2, 3, 9], [1, 2, 3, 4])
        assert result.n_effective == 1

    def test_all_zero_is_error(self):
        with pytest.raises(StatsError):
            wilcoxon_one_sided([1, 2], [1, 2])

    def test_matches_full_enumeration(self):
        rng = random.Random(3)
        for _ in range(40):
            n = rng.randint(2, 12)
            a = [rng.randint(0, 6) for _ in range(n)]
            b = [rng.randint(0, 6) for _ in range(n)]
            if all(x == y for x, y in zip(a, b)):
                continue
            w_oracle, p_oracle = wilcoxon_exact_enumeration(a, b)
            result = wilcoxon_one_sided(a, b)
            assert result.statistic == pytest.approx(w_oracle)
            assert result.p_one_sided == pytest.approx(p_oracle, abs=1e-12)

    def test_distribution_sums_to_one(self):
        for ranks in ([1, 2, 3], [1.5, 1.5, 3, 4], [2, 2, 2, 4, 5]):
            _, probs = signed_rank_distribution(ranks)
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_normal_approximation_close_to_exact(self):
        rng = random.Random(11)
        a = [rng.random() + 0.25 for _ in range(30)]
        b = [rng.random() for _ in range(30)]
        result = wilcoxon_one_sided(a, b)
        assert result.method == "normal_approx"
        # reference: the exact distribution is still computable at n=30
        d = np.array(a) - np.array(b)
        d = d[d != 0]
        order = np.argsort(np.abs(d), kind="stable")
        ranks = np.empty(len(d))
        ranks[order] = np.arange(1, len(d) + 1)
        support, probs = signed_rank_distribution(ranks)
        exact_p = probs[support >= result.statistic - 0.25].sum()
        assert result.p_one_sided == pytest.approx(exact_p, abs=5e-3)


class TestCliffsDelta:
    def test_total_dominance(self):
        assert cliffs_delta([4, 5, 6], [1, 2, 3]).delta == 1.0

    def test_identical_multisets(self):
        assert cliffs_delta([1, 2, 2], [2, 2, 1]).delta == 0.0

    def test_hand_example(self):
        assert cliffs_delta([1, 3], [2, 2]).delta == 0.0

    def test_antisymmetry(self):
        rng = random.Random(5)
        a = [rng.random() for _ in range(8)]
        b = [rng.random() for _ in range(6)]
        assert cliffs_delta(a, b).delta == -cliffs_delta(b, a).delta

    def test_matches_bruteforce(self):
        rng = random.Random(9)
        for _ in range(30):
            a = [rng.randint(0, 4) for _ in range(rng.randint(1, 10))]
            b = [rng.randint(0, 4) for _ in range(rng.randint(1, 10))]
            assert cliffs_delta(a, b).delta == pytest.approx(
                cliffs_delta_bruteforce(a, b), abs=0
            )

    def test_magnitude_bands(self):
        assert cliffs_delta([1] * 2 + [5] * 8, [1] * 8 + [5] * 2).magnitude == "large"
        assert cliffs_delta([0, 1, 1], [0, 0, 1]).magnitude == "medium"  # 4/9
        assert cliffs_delta([0, 1], [0, 1]).magnitude == "small"


class TestIsotonic:
    def test_already_monotone_is_identity(self):
        fit = isotonic_fit([1, 2, 3], [0.1, 0.2, 0.9])
        assert fit.fitted == (0.1, 0.2, 0.9)

    def test_pava_hand_trace(self):
        fit = isotonic_fit([1, 2, 3], [3, 1, 2])
        assert fit.fitted == (2.0, 2.0, 2.0)

    def test_two_point_pooling(self):
        fit = isotonic_fit([0, 1], [2, 1])
        assert fit.fitted == (1.5, 1.5)

    def test_matches_partition_oracle(self):
        rng = random.Random(13)
        for _ in range(80):
            n = rng.randint(1, 6)
            y = [rng.randint(0, 3) for _ in range(n)]
            fit = isotonic_fit(list(range(n)), y)
            oracle = isotonic_bruteforce(y)
            assert list(fit.fitted) == pytest.approx(oracle, abs=1e-9)

    def test_mean_preserved(self):
        rng = random.Random(17)
        y = [rng.random() for _ in range(20)]
        fit = isotonic_fit(list(range(20)), y)
        assert np.mean(fit.fitted) == pytest.approx(np.mean(y))

    def test_equal_x_preaveraged(self):
        fit = isotonic_fit([1, 1, 2], [0.0, 1.0, 0.25])
        assert fit.breakpoints == (1.0, 2.0)
        # group mean 0.5 then pooled with 0.25
        assert fit.fitted[0] == pytest.approx(fit.fitted[1])

    def test_evaluation_monotone(self):
        rng = random.Random(19)
        fit = isotonic_fit([rng.random() for _ in range(30)], [rng.random() for _ in range(30)])
        queries = sorted(rng.uniform(-0.5, 1.5) for _ in range(50))
        values = [fit.evaluate(q) for q in queries]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def test_degenerate_flag(self):
        assert isotonic_fit([1, 2, 3], [1, 1, 1]).degenerate
        assert not isotonic_fit([1, 2], [0, 1]).degenerate


def _separable_model(n=300, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3))
    y = (X[:, 0] > 0).astype(int)
    model = train(X, y, BoostParams(max_depth=2, learning_rate=0.3, n_estimators=20))
    return model, X, y


class TestPermutationImportance:
    def test_unused_feature_importance_exactly_zero(self):
        model, X, y = _separable_model()
        used = {
            model.trees[t].feature[i]
            for t in range(len(model.trees))
            for i in range(len(model.trees[t].feature))
            if model.trees[t].feature[i] >= 0
        }
        unused = [f for f in range(3) if f not in used]
        result = permutation_importance(model, X, y, repeats=3, seed=0)
        for f in unused:
            assert result.mean_importance[f] == 0.0
            assert result.std_importance[f] == 0.0

    def test_informative_feature_near_baseline_minus_half(self):
        model, X, y = _separable_model()
        result = permutation_importance(model, X, y, repeats=10, seed=1)
        assert result.baseline > 0.99
        assert result.mean_importance[0] == pytest.approx(result.baseline - 0.5, abs=0.08)

    def test_deterministic(self):
        model, X, y = _separable_model()
        r1 = permutation_importance(model, X, y, repeats=4, seed=7)
        r2 = permutation_importance(model, X, y, repeats=4, seed=7)
        assert np.array_equal(r1.mean_importance, r2.mean_importance)
        assert np.array_equal(r1.std_importance, r2.std_importance)

    def test_top_returns_five(self):
        model, X, y = _separable_model()
        result = permutation_importance(model, X, y, repeats=2, seed=3)
        assert len(result.top(5)) == 3  # only 3 features exist
        assert result.top(2)[0][0] == "f0"


class TestBinAnalysis:
    def test_tertile_sizes(self):
        feature = list(range(9))
        human = [0, 1, 2, 0, 1, 2, 0, 1, 2]
        scores = {"j": [0, 1, 2, 0, 1, 2, 0, 1, 2]}
        selections = [["j"]] * 9
        result = bin_analysis(feature, human, scores, selections, feature_name="f")
        assert tuple(b.count for b in result.bins) == (3, 3, 3)

    def test_always_selected_judge_rate_one(self):
        feature = list(range(9))
        human = [0, 1, 2] * 3
        scores = {"a": [0, 1, 2] * 3, "b": [2, 1, 0] * 3}
        selections = [["a"]] * 9
        result = bin_analysis(feature, human, scores, selections)
        for stats in result.bins:
            assert stats.selection_rate_by_judge["a"] == 1.0
            assert stats.selection_rate_by_judge["b"] == 0.0

    def test_constant_feature_is_error(self):
        with pytest.raises(StatsError):
            bin_analysis([1.0] * 6, [0, 1] * 3, {"j": [0, 1] * 3}, [["j"]] * 6)

    def test_selection_counts_sum_to_jury_size_times_count(self):
        rng = random.Random(23)
        feature = [rng.random() for _ in range(30)]
        human = [rng.randint(0, 2) for _ in range(30)]
        scores = {j: [rng.randint(0, 2) for _ in range(30)] for j in "abc"}
        selections = [rng.sample(["a", "b", "c"], 2) for _ in range(30)]
        result = bin_analysis(feature, human, scores, selections)
        for stats in result.bins:
            assert sum(stats.selection_count_by_judge.values()) == 2 * stats.count


class TestGroupFeatureDiff:
    def test_identical_groups_all_zero(self):
        features = np.array([[1.0, 2.0]] * 8)
        errors = [0.0, 1.0] * 4
        rows = group_feature_diff(["a", "b"], features, errors, 0.5)
        assert all(r.median_difference == 0 and r.mean_difference == 0 for r in rows)

    def test_error_feature_ranked_first(self):
        rng = random.Random(29)
        errors = [rng.random() for _ in range(40)]
        noise = [rng.gauss(0, 0.01) for _ in range(40)]
        features = np.column_stack([errors, noise])
        rows = group_feature_diff(["the_error", "noise"], features, errors, 0.5)
        assert rows[0].feature == "the_error"

    def test_random_features_small_differences(self):
        rng = np.random.default_rng(31)
        n = 4000
        features = rng.standard_normal((n, 3))
        errors = rng.random(n)
        rows = group_feature_diff(["a", "b", "c"], features, errors, 0.5)
        # independent features: group means differ by ~N(0, sqrt(2/n)); 3 sigma
        bound = 3.0 * math.sqrt(2.0 / (n / 2))
        assert all(r.mean_difference < bound for r in rows)

    def test_empty_group_is_error(self):
        with pytest.raises(StatsError):
            group_feature_diff(["a"], np.ones((3, 1)), [0.1, 0.1, 0.1], 0.5)
