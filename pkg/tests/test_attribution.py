"""Interventional TreeSHAP, linear SHAP, global importance and the softmin weights."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fwmrs import attribution
from fwmrs.attribution import (
    AttributionBudgetError,
    FeatureImportances,
    global_importance,
    linear_shap,
    softmin_weights,
    tree_shap_interventional,
    write_importances_csv,
)
from fwmrs.forest import ForestConfig, TrainedForest, fit_forest, forest_predict_proba
from fwmrs.linear import HINGE, TrainedLinear, fit_linear_svm, linear_decision

from oracles import shapley_coalitions, softmin_mp


def _tree(feature, threshold, left, right, value, n_features):
    """Single-tree forest from node arrays (children local, leaves feature -1)."""
    value = np.asarray(value, dtype=float)
    return TrainedForest(
        np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64), value,
        1 - value, value, np.zeros(1, dtype=np.int64), n_features, np.full(n_features, 1.0 / n_features),
    )


def _random_forest(seed, n_features=4, max_depth=3, n_trees=3, m=40):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(m, n_features)).astype(float)
    y = rng.integers(0, 2, m)
    cfg = ForestConfig(n_trees, max_depth=max_depth, mtry=n_features, seed=seed)
    return fit_forest(X, y, cfg=cfg), X


def _linear(coef, intercept=0.0, scaling=None):
    coef = np.asarray(coef, dtype=float)
    return TrainedLinear(coef, intercept, HINGE, 1.0, np.ones(len(coef)) if scaling is None else scaling)


class TestTreeShapOracle:
    def test_depth_two_tree_two_background_rows(self):
        # x0 <= 0.5 ? (x1 <= 0.5 ? 0.1 : 0.7) : 0.9
        model = _tree([0, 1, -1, -1, -1], [0.5, 0.5, 0, 0, 0], [1, 3, -1, -1, -1], [2, 4, -1, -1, -1],
                      [0, 0, 0.9, 0.1, 0.7], 2)
        background = np.array([[0.0, 0.0], [1.0, 1.0]])
        x = np.array([0.0, 1.0])
        f = lambda h: forest_predict_proba(model, h[None])[0]
        np.testing.assert_allclose(tree_shap_interventional(model, x[None], background)[0],
                                   shapley_coalitions(f, x, background), atol=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_coalition_enumeration(self, seed):
        model, X = _random_forest(seed)
        rng = np.random.default_rng(seed + 100)
        background = X[rng.choice(len(X), 5, replace=False)]
        explain = rng.integers(0, 4, size=(4, 4)).astype(float)
        f = lambda h: forest_predict_proba(model, h[None])[0]
        phi = tree_shap_interventional(model, explain, background)
        for i, x in enumerate(explain):
            np.testing.assert_allclose(phi[i], shapley_coalitions(f, x, background), atol=1e-12)

    def test_repeated_feature_on_path(self):
        # x0 <= 0 ? 0.2 : (x0 <= 1 ? 0.5 : 1.0): one feature split twice on a path
        model = _tree([0, -1, 0, -1, -1], [0.0, 0, 1.0, 0, 0], [1, -1, 3, -1, -1], [2, -1, 4, -1, -1],
                      [0, 0.2, 0, 0.5, 1.0], 2)
        background = np.array([[-1.0, 0.0], [0.5, 3.0], [2.0, 1.0]])
        x = np.array([2.0, 5.0])
        f = lambda h: forest_predict_proba(model, h[None])[0]
        np.testing.assert_allclose(tree_shap_interventional(model, x[None], background)[0],
                                   shapley_coalitions(f, x, background), atol=1e-12)

    def test_recursive_and_bitmask_kernels_agree(self):
        model, X = _random_forest(3, n_features=4, max_depth=None, n_trees=1, m=60)
        Z = X[:7]
        E = X[10:20]
        fact = attribution._factorials(model.n_features + 1)
        s = model.tree_slice(0)
        args = (model.feature, model.threshold, model.left, model.right, model.value, s.start)
        a = np.zeros(E.shape)
        attribution._recursive_tree_shap(*args, E, Z, fact, a)
        widest, depth = attribution._max_path_features(model.feature, model.left, model.right, s.start,
                                                       s.stop - s.start, 4)
        b = np.zeros(E.shape)
        attribution._leaf_pattern_tree_shap(*args, s.stop - s.start, depth, E, Z, fact, b)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestTreeShapProperties:
    def test_constant_model(self):
        model = _tree([-1], [0.0], [-1], [-1], [0.3], 3)
        phi = tree_shap_interventional(model, np.random.default_rng(0).normal(size=(5, 3)), np.zeros((2, 3)))
        np.testing.assert_array_equal(phi, 0.0)

    def test_stump_only_attributes_split_feature(self):
        model = _tree([2, -1, -1], [0.0, 0, 0], [1, -1, -1], [2, -1, -1], [0, 0.1, 0.8], 4)
        rng = np.random.default_rng(1)
        phi = tree_shap_interventional(model, rng.normal(size=(20, 4)), rng.normal(size=(6, 4)))
        np.testing.assert_array_equal(phi[:, [0, 1, 3]], 0.0)
        assert np.any(phi[:, 2] != 0)

    @given(seed=st.integers(0, 100_000))
    def test_local_accuracy(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        X = rng.normal(size=(50, n))
        y = rng.integers(0, 2, 50)
        model = fit_forest(X, y, cfg=ForestConfig(4, seed=seed))
        background = rng.normal(size=(int(rng.integers(1, 8)), n))
        explain = rng.normal(size=(10, n))
        phi = tree_shap_interventional(model, explain, background)
        target = forest_predict_proba(model, explain) - forest_predict_proba(model, background).mean()
        np.testing.assert_allclose(phi.sum(axis=1), target, atol=1e-6)

    def test_budget_refusal(self, monkeypatch):
        model, X = _random_forest(0)
        monkeypatch.setattr(attribution, "EXACT_BUDGET", 10.0)
        with pytest.raises(AttributionBudgetError, match="subsample"):
            tree_shap_interventional(model, X, X)

    def test_empty_background(self):
        model, X = _random_forest(0)
        with pytest.raises(ValueError):
            tree_shap_interventional(model, X, np.empty((0, 4)))


class TestLinearShap:
    def test_hand_case(self):
        phi = linear_shap(_linear([2.0, -1.0]), np.array([[1.0, 3.0]]), np.zeros((3, 2)))
        np.testing.assert_allclose(phi, [[2.0, -3.0]])
        assert phi.sum() == pytest.approx(linear_decision(_linear([2.0, -1.0]), np.array([[1.0, 3.0]]))[0])

    def test_at_background_mean(self):
        bg = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(linear_shap(_linear([1.0, 5.0]), bg.mean(0, keepdims=True), bg), 0.0)

    def test_zero_coefficient_column(self):
        phi = linear_shap(_linear([0.0, 1.0]), np.random.default_rng(0).normal(size=(5, 2)), np.zeros((1, 2)))
        np.testing.assert_array_equal(phi[:, 0], 0.0)

    @given(seed=st.integers(0, 100_000))
    def test_local_accuracy(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 3))
        y = np.where(X[:, 0] + rng.normal(size=30) > 0, 1.0, -1.0)
        if len(np.unique(y)) < 2:
            return
        model = fit_linear_svm(X, y, feature_weights=rng.uniform(0, 2, 3))
        bg = rng.normal(size=(7, 3))
        ex = rng.normal(size=(5, 3))
        phi = linear_shap(model, ex, bg)
        target = linear_decision(model, ex) - linear_decision(model, bg).mean()
        np.testing.assert_allclose(phi.sum(axis=1), target, atol=1e-9)


class TestGlobalImportance:
    def test_zero(self):
        np.testing.assert_array_equal(global_importance(np.zeros((3, 2))).values, 0.0)

    def test_absolute_value(self):
        np.testing.assert_array_equal(global_importance([[-3.0, 1.0]]).values, [3.0, 1.0])

    def test_mean_of_absolutes(self):
        np.testing.assert_array_equal(global_importance([[1.0, 0.0], [-1.0, 2.0]]).values, [1.0, 1.0])

    def test_rejects_negative_importances(self):
        with pytest.raises(ValueError):
            FeatureImportances(np.array([-1.0]), "x", 0)


class TestSoftmin:
    def test_documented_case(self):
        np.testing.assert_allclose(softmin_weights(np.array([1.0, 2.0, 3.0]), 0.5).values,
                                   [0.8668, 0.1173, 0.0159], atol=1e-3)

    @given(c=st.floats(0, 1e3), t=st.floats(1e-3, 1e3))
    def test_equal_importances(self, c, t):
        np.testing.assert_allclose(softmin_weights(np.full(3, c), t).values, 1 / 3, atol=1e-12)

    def test_high_temperature_uniform(self):
        I = np.random.default_rng(0).uniform(0, 1, 8)
        np.testing.assert_allclose(softmin_weights(I, 1e6).values, 1 / 8, atol=1e-6)

    def test_arbitrary_precision_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 12))
            I = rng.exponential(0.2, n)
            t = float(10 ** rng.uniform(-3, 1))
            np.testing.assert_allclose(softmin_weights(I, t).values, softmin_mp(I, t), rtol=0, atol=1e-10)

    def test_extreme_ratios_stay_finite(self):
        w = softmin_weights(np.array([0.0, 10.0, 1e4]), 1e-3).values
        assert np.all(np.isfinite(w)) and w[0] == pytest.approx(1.0)

    @given(I=st.lists(st.floats(0, 5), min_size=1, max_size=10), t=st.floats(1e-3, 10),
           seed=st.integers(0, 1000))
    def test_simplex_and_equivariance(self, I, t, seed):
        I = np.array(I)
        w = softmin_weights(I, t).values
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-9)
        perm = np.random.default_rng(seed).permutation(len(I))
        np.testing.assert_allclose(softmin_weights(I[perm], t).values, w[perm], atol=1e-15)
        assert w[np.argmin(I)] == w.max()

    @given(I=st.lists(st.floats(0, 5), min_size=2, max_size=6), i=st.integers(0, 5),
           bump=st.floats(1e-3, 1.0), t=st.floats(0.05, 10))
    def test_strictly_decreasing_in_own_importance(self, I, i, bump, t):
        I = np.array(I)
        i = i % len(I)
        J = I.copy()
        J[i] += bump
        before, after = softmin_weights(I, t).values[i], softmin_weights(J, t).values[i]
        assert after <= before
        # strict unless the weight is saturated at 1 or underflows to 0 in float64
        if 1e-300 < before < 1.0 - 1e-9:
            assert after < before

    @given(I=st.lists(st.floats(0, 2), min_size=2, max_size=8))
    def test_lower_temperature_concentrates(self, I):
        grid = [0.5, 0.25, 0.1, 0.05, 0.025, 0.01, 0.005, 0.0025, 0.001]
        peaks = [softmin_weights(np.array(I), t).values.max() for t in grid]
        assert all(b >= a - 1e-12 for a, b in zip(peaks, peaks[1:]))

    def test_nonpositive_temperature(self):
        with pytest.raises(ValueError):
            softmin_weights(np.ones(2), 0.0)

    def test_csv_export(self, tmp_path):
        I = FeatureImportances(np.array([0.2, 0.1]), "tree", 5)
        write_importances_csv(tmp_path / "w.csv", ["a", "b"], I, softmin_weights(I, 0.1))
        lines = (tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == "feature_name,importance,weight" and lines[1].startswith("a,0.2,")
