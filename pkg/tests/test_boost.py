import json

import numpy as np
import pytest

from dynjury.boost import (
    BoostError,
    BoostedModel,
    BoostParams,
    ParamGrid,
    _best_split,
    auc,
    predict_proba,
    random_search,
    train,
)
from dynjury.textfeat import FeatureVector
from oracles import auc_bruteforce, best_split_bruteforce

TEST_PARAMS = BoostParams(max_depth=3, learning_rate=0.2, n_estimators=60)


def separable_data(n=500, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (X[:, 0] > 0).astype(int)
    return X, y


def xor_data(n=500, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    return X, y


class TestTrain:
    def test_all_positive_labels(self):
        X = np.random.default_rng(1).standard_normal((20, 3))
        model = train(X, np.ones(20), TEST_PARAMS)
        assert model.warning is not None
        assert len(model.trees) == 0
        assert np.all(model.predict_proba_matrix(X) >= 0.95)

    def test_separable_auc(self):
        X, y = separable_data(seed=2)
        Xt, yt = separable_data(seed=3)
        model = train(X, y, TEST_PARAMS)
        assert auc(model.predict_proba_matrix(Xt), yt) >= 0.95

    def test_xor_needs_depth_two(self):
        X, y = xor_data(seed=4)
        Xt, yt = xor_data(seed=5)
        deep = train(X, y, BoostParams(max_depth=2, learning_rate=0.2, n_estimators=100))
        assert auc(deep.predict_proba_matrix(Xt), yt) >= 0.90
        stump = train(X, y, BoostParams(max_depth=1, learning_rate=0.2, n_estimators=100))
        assert abs(auc(stump.predict_proba_matrix(Xt), yt) - 0.5) < 0.1

    def test_logloss_monotone_nonincreasing(self):
        X, y = separable_data(n=200, seed=6)
        model = train(X, y, TEST_PARAMS)
        losses = model.training_logloss
        assert len(losses) == TEST_PARAMS.n_estimators + 1
        assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))

    def test_rejects_nan(self):
        X = np.ones((4, 2))
        X[0, 0] = np.nan
        with pytest.raises(BoostError, match="NaN"):
            train(X, [0, 1, 0, 1], TEST_PARAMS)

    def test_rejects_non_binary(self):
        with pytest.raises(BoostError):
            train(np.ones((3, 1)), [0, 1, 2], TEST_PARAMS)

    def test_rejects_single_row(self):
        with pytest.raises(BoostError):
            train(np.ones((1, 1)), [1], TEST_PARAMS)

    def test_deterministic_serialized_model(self):
        X, y = separable_data(n=120, seed=7)
        m1 = train(X, y, TEST_PARAMS, seed=1)
        m2 = train(X, y, TEST_PARAMS, seed=99)  # seed is inert by design
        assert json.dumps(m1.to_json(), sort_keys=True) == json.dumps(m2.to_json(), sort_keys=True)


class TestPredict:
    def test_zero_tree_base_rate_half(self):
        X = np.zeros((10, 2))
        y = np.array([0, 1] * 5)
        model = train(X, y, BoostParams(max_depth=2, learning_rate=0.1, n_estimators=0))
        assert model.predict_proba_matrix(np.zeros((1, 2)))[0] == pytest.approx(0.5)

    def test_roundtrip_bit_identical(self, tmp_path):
        X, y = separable_data(n=150, seed=8)
        model = train(X, y, TEST_PARAMS)
        path = tmp_path / "model.json"
        model.save(path)
        clone = BoostedModel.load(path)
        assert np.array_equal(model.predict_proba_matrix(X), clone.predict_proba_matrix(X))

    def test_single_split_tree_ordering(self):
        X = np.arange(12, dtype=float).reshape(-1, 1)
        y = np.array([0] * 6 + [1] * 6)
        model = train(X, y, BoostParams(max_depth=1, learning_rate=0.5, n_estimators=10))
        low = model.predict_proba_matrix(np.array([[0.5]]))[0]
        high = model.predict_proba_matrix(np.array([[10.5]]))[0]
        assert high > low

    def test_feature_name_check(self):
        X, y = separable_data(n=50, seed=9)
        model = train(X, y, TEST_PARAMS, feature_names=["a", "b", "c", "d"])
        row = FeatureVector(("a", "b", "c", "d"), (0.1, 0.2, 0.3, 0.4))
        assert 0.0 < predict_proba(model, row) < 1.0
        bad = FeatureVector(("a", "b", "c", "x"), (0.1, 0.2, 0.3, 0.4))
        with pytest.raises(BoostError, match="feature names"):
            predict_proba(model, bad)

    def test_width_check(self):
        X, y = separable_data(n=50, seed=10)
        model = train(X, y, TEST_PARAMS)
        with pytest.raises(BoostError, match="width"):
            model.predict_proba_matrix(np.ones((2, 3)))

    def test_probability_strictly_inside_unit_interval(self):
        model = BoostedModel(
            base_score=500.0, trees=[], params=TEST_PARAMS, feature_names=("a",)
        )
        p_high = model.predict_proba_matrix(np.zeros((1, 1)))[0]
        model_low = BoostedModel(
            base_score=-500.0, trees=[], params=TEST_PARAMS, feature_names=("a",)
        )
        p_low = model_low.predict_proba_matrix(np.zeros((1, 1)))[0]
        assert 0.0 < p_low < p_high < 1.0


class TestSplitChoice:
    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(11)
        for trial in range(25):
            n = int(rng.integers(5, 60))
            d = int(rng.integers(1, 5))
            X = rng.standard_normal((n, d))
            if trial % 3 == 0:
                X = np.round(X, 1)  # force ties
            g = rng.standard_normal(n)
            h = rng.random(n) + 0.1
            found = _best_split(X, g, h, 1.0, 1.0)
            oracle = best_split_bruteforce(X, g, h, 1.0, 1.0)
            if oracle is None:
                assert found is None or found[0] <= 0
            else:
                assert found is not None
                assert found[0] == pytest.approx(oracle, rel=1e-9, abs=1e-12)

    def test_respects_min_child_weight(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        g = np.array([1.0, 1.0, -1.0, -1.0])
        h = np.array([0.1, 0.1, 0.1, 0.1])
        assert _best_split(X, g, h, 1.0, 0.5) is None

    def test_tie_breaks_to_lowest_feature(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        g = np.array([1.0, 1.0, -1.0, -1.0])
        h = np.ones(4)
        found = _best_split(X, g, h, 1.0, 0.0)
        assert found is not None and found[1] == 0


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_independent_scores_near_half(self):
        rng = np.random.default_rng(12)
        scores = rng.random(4000)
        labels = (rng.random(4000) < 0.5).astype(int)
        assert abs(auc(scores, labels) - 0.5) < 0.05

    def test_six_point_example_matches_bruteforce(self):
        scores = [0.1, 0.4, 0.35, 0.8, 0.35, 0.7]
        labels = [0, 0, 1, 1, 0, 1]
        assert auc(scores, labels) == pytest.approx(auc_bruteforce(scores, labels))

    def test_ties_count_half(self):
        assert auc([0.5, 0.5], [0, 1]) == 0.5

    def test_single_class_error(self):
        with pytest.raises(BoostError, match="undefined"):
            auc([0.1, 0.2], [1, 1])

    def test_random_cases_match_bruteforce(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            n = int(rng.integers(2, 40))
            scores = np.round(rng.random(n), 1)
            labels = (rng.random(n) < 0.5).astype(int)
            if labels.min() == labels.max():
                continue
            assert auc(scores, labels) == pytest.approx(auc_bruteforce(scores, labels))


SMALL_GRID = ParamGrid(
    max_depth=(2, 3), learning_rate=(0.1, 0.3), n_estimators=(10, 30)
)


class TestRandomSearch:
    def test_single_trial_returns_sample(self):
        X, y = separable_data(n=80, seed=14)
        params, model, score = random_search((X, y), (X, y), SMALL_GRID, trials=1, seed=5)
        assert params.max_depth in SMALL_GRID.max_depth
        assert params in {params}  # hashable

    def test_deterministic(self):
        X, y = separable_data(n=80, seed=15)
        Xv, yv = separable_data(n=80, seed=16)
        first = random_search((X, y), (Xv, yv), SMALL_GRID, trials=5, seed=9)[0]
        second = random_search((X, y), (Xv, yv), SMALL_GRID, trials=5, seed=9)[0]
        assert first == second

    def test_separable_reaches_high_auc(self):
        X, y = separable_data(n=300, seed=17)
        Xv, yv = separable_data(n=300, seed=18)
        _, _, score = random_search((X, y), (Xv, yv), SMALL_GRID, trials=5, seed=1)
        assert score >= 0.9

    def test_tie_break_prefers_fewer_estimators(self):
        # all-ones labels: every config gives AUC fallback 0.5, so the
        # smallest (n_estimators, max_depth) sampled must win
        X = np.random.default_rng(19).standard_normal((30, 2))
        y = np.ones(30)
        grid = ParamGrid(max_depth=(2, 5), learning_rate=(0.1,), n_estimators=(10, 50))
        params, _, score = random_search((X, y), (X, y), grid, trials=16, seed=3)
        assert score == 0.5
        assert params.n_estimators == 10
        assert params.max_depth == 2

    def test_trials_must_be_positive(self):
        with pytest.raises(BoostError):
            random_search((np.ones((2, 1)), [0, 1]), (np.ones((2, 1)), [0, 1]), SMALL_GRID, trials=0)


class TestParamGrid:
    def test_default_grid_is_published_search_space(self):
        grid = ParamGrid()
        assert grid.max_depth == (2, 3, 4, 5, 6, 7, 8, 9)
        assert grid.learning_rate == (0.01, 0.03, 0.05, 0.07, 0.1, 0.2)
        assert grid.n_estimators == (500, 600, 800, 1000, 1200)
        assert grid.l2_lambda == (1.0,)
        assert grid.min_child_weight == (1.0,)

    def test_json_roundtrip(self):
        grid = ParamGrid(max_depth=(2,), learning_rate=(0.1,), n_estimators=(5,))
        assert ParamGrid.from_json(grid.to_json()) == grid
