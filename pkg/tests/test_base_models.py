import json

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpreg.base_models import (LinearModel, MulticlassLogistic, calibrate_intercepts,
                               default_bound, discretize_tl, discretize_tl_index, fit_least_squares,
                               fit_logistic, load_model, model_from_dict, save_model, squared_error)
from dpreg.core_math import build_grid
from dpreg.errors import (DegenerateGroupError, InvalidParameterError, OutOfRangeError,
                          ParseError, RankDeficiencyError)

seeds = st.integers(0, 2 ** 32 - 1)


def mp_least_squares(X, y):
    """Normal equations with an explicit intercept column in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    A = mpmath.matrix([[1] + [mpmath.mpf(float(v)) for v in row] for row in X])
    b = mpmath.matrix([mpmath.mpf(float(v)) for v in y])
    sol = mpmath.lu_solve(A.T * A, A.T * b)
    return np.array([float(v) for v in sol])


class TestLeastSquares:
    def test_matches_high_precision_oracle(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 3)) * [1.0, 10.0, 0.1]
        y = X @ [1.5, -0.2, 4.0] + 0.3 + rng.normal(size=40) * 0.1
        model = fit_least_squares(X, y)
        np.testing.assert_allclose(model.weights, mp_least_squares(X, y), rtol=1e-9, atol=1e-10)

    def test_exact_fit(self):
        X = np.arange(10.0).reshape(5, 2) ** [1, 2]
        y = 2.0 + X @ [0.5, -0.25]
        model = fit_least_squares(X, y, bound=100.0)
        np.testing.assert_allclose(model.weights, [2.0, 0.5, -0.25], atol=1e-10)

    def test_rank_deficiency(self):
        X = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
        with pytest.raises(RankDeficiencyError):
            fit_least_squares(X, np.arange(6.0))
        fit_least_squares(X, np.arange(6.0), ridge=1e-3)

    def test_constant_feature_is_rank_deficient(self):
        with pytest.raises(RankDeficiencyError):
            fit_least_squares(np.ones((5, 1)), np.arange(5.0))

    def test_default_bound_and_clamp(self):
        model = fit_least_squares(np.arange(5.0), np.array([-3.0, 0.0, 1.0, 2.0, 2.5]))
        assert model.clamp_bound == 3.0
        assert np.all(np.abs(model.predict([[100.0], [-100.0]])) == 3.0)

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            fit_least_squares(np.ones((3, 1)), np.ones(2))
        with pytest.raises(InvalidParameterError):
            fit_least_squares(np.ones((3, 1)), np.ones(3), ridge=-1.0)
        with pytest.raises(InvalidParameterError):
            fit_least_squares(np.array([[np.nan]]), np.ones(1))

    @given(seeds)
    def test_residual_orthogonal(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        model = fit_least_squares(X, y, bound=1e6)
        res = model.predict_raw(X) - y
        assert abs(res.sum()) <= 1e-9
        np.testing.assert_allclose(X.T @ res, 0.0, atol=1e-9)


def test_default_bound():
    assert default_bound([0.2, -0.5]) == 1.0
    assert default_bound([0.2, -7.5]) == 7.5
    with pytest.raises(InvalidParameterError):
        default_bound([])


def test_squared_error():
    assert squared_error([1.0, 2.0], [0.0, 0.0]) == pytest.approx(2.5)
    with pytest.raises(InvalidParameterError):
        squared_error([1.0], [1.0, 2.0])


class TestLogistic:
    def _data(self, seed=0, n=600):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, 2))
        W = np.array([[0.0, 2.0, 0.0], [0.5, -1.0, 1.0], [-0.5, 0.0, -2.0]])
        logits = W[:, 0] + X @ W[:, 1:].T
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        labels = (rng.random(n)[:, None] > probs.cumsum(axis=1)).sum(axis=1)
        return X, labels, W

    def test_loss_monotone(self):
        X, labels, _ = self._data()
        info = {}
        fit_logistic(X, labels, iters=200, info=info)
        h = np.array(info["loss_history"])
        assert np.all(np.diff(h) <= 1e-15)
        assert h[-1] < h[0]

    def test_stationary(self):
        X, labels, _ = self._data()
        l2 = 1e-3
        model = fit_logistic(X, labels, l2=l2, iters=2000)
        probs = model.predict_proba(X)
        onehot = np.eye(3)[labels]
        grad_b = (probs - onehot).mean(axis=0)
        np.testing.assert_allclose(grad_b, 0.0, atol=1e-6)

    def test_recovers_generating_model(self):
        X, labels, W = self._data(n=8000)
        model = fit_logistic(X, labels, l2=0.0, iters=300)
        # softmax weights are identified up to a common shift
        est = model.weights - model.weights.mean(axis=0)
        np.testing.assert_allclose(est, W - W.mean(axis=0), atol=0.1)

    def test_intercepts_only_match_frequencies(self):
        labels = np.array([0, 0, 0, 1])
        model = fit_logistic(np.zeros((4, 1)), labels, iters=50)
        np.testing.assert_allclose(model.predict_proba(np.zeros((1, 1)))[0], [0.75, 0.25], atol=1e-9)

    def test_missing_class(self):
        with pytest.raises(DegenerateGroupError):
            fit_logistic(np.zeros((3, 1)), [0, 2, 2], K=3)

    def test_bad_labels(self):
        with pytest.raises(InvalidParameterError):
            fit_logistic(np.zeros((2, 1)), [0.5, 1.0])
        with pytest.raises(InvalidParameterError):
            fit_logistic(np.zeros((2, 1)), [0, 3], K=2)

    def test_proba_rows_sum_to_one(self):
        X, labels, _ = self._data()
        probs = fit_logistic(X, labels, iters=50).predict_proba(X)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_calibration(self):
        X, labels, _ = self._data()
        model = fit_logistic(X, labels, iters=100)
        target = np.array([0.2, 0.3, 0.5])
        cal = calibrate_intercepts(model, X, target)
        np.testing.assert_allclose(cal.predict_proba(X).mean(axis=0), target, atol=1e-9)


class TestDiscretization:
    def test_truncates_toward_zero(self):
        g = build_grid(1.0, 4)
        np.testing.assert_allclose(discretize_tl([0.3, -0.3, 0.99, -0.99, 0.0], g),
                                   [0.25, -0.25, 0.75, -0.75, 0.0])

    def test_endpoint(self):
        g = build_grid(2.0, 3)
        assert discretize_tl(2.0, g) == 2.0 and discretize_tl(-2.0, g) == -2.0

    def test_atoms_fixed(self):
        g = build_grid(1.9, 9)
        np.testing.assert_array_equal(discretize_tl(g.atoms, g), g.atoms)
        np.testing.assert_array_equal(discretize_tl_index(g.atoms, g), np.arange(-9, 10))

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeError):
            discretize_tl(1.01, build_grid(1.0, 4))

    @given(seeds, st.floats(0.1, 10.0), st.integers(1, 50))
    def test_properties(self, seed, B, L):
        g = build_grid(B, L)
        h = np.random.default_rng(seed).uniform(-B, B, size=50)
        T = discretize_tl(h, g)
        assert np.all(np.abs(T) <= np.abs(h) + 1e-12)
        assert np.all(np.abs(T - h) < B / L + 1e-12)
        idx = np.searchsorted(g.atoms, T)
        np.testing.assert_allclose(g.atoms[idx], T, atol=1e-12 * B)

    @given(seeds, st.floats(0.05, 1.0), st.integers(1, 100))
    def test_price_unit_scale(self, seed, B, L):
        rng = np.random.default_rng(seed)
        g = build_grid(B, L)
        h = rng.uniform(-B, B, size=rng.integers(1, 200))
        y = rng.uniform(-B, B, size=h.size)
        diff = abs(squared_error(discretize_tl(h, g), y) - squared_error(h, y))
        assert diff <= 4 * B / L + 1 / L ** 2

    @given(seeds, st.floats(0.1, 50.0), st.integers(1, 100))
    def test_price_any_scale(self, seed, B, L):
        rng = np.random.default_rng(seed)
        g = build_grid(B, L)
        h = rng.uniform(-B, B, size=100)
        y = rng.uniform(-B, B, size=100)
        diff = abs(squared_error(discretize_tl(h, g), y) - squared_error(h, y))
        assert diff <= 4 * B * B / L + (B / L) ** 2 + 1e-12 * B * B

    def test_unit_scale_bound_fails_for_large_bound(self):
        g = build_grid(4.0, 1)
        diff = abs(squared_error(discretize_tl([3.99], g), [-4.0]) - squared_error([3.99], [-4.0]))
        assert diff > 4 * 4.0 / 1 + 1


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        lin = LinearModel([0.5, 1.0, -2.0], 3.0)
        clf = MulticlassLogistic(np.arange(6.0).reshape(2, 3))
        for model in (lin, clf):
            path = tmp_path / f"{type(model).__name__}.json"
            save_model(model, path)
            back = load_model(path)
            np.testing.assert_array_equal(back.weights, model.weights)
            assert type(back) is type(model)
        assert load_model(tmp_path / "LinearModel.json").clamp_bound == 3.0

    def test_bad_documents(self, tmp_path):
        with pytest.raises(ParseError):
            model_from_dict({"kind": "tree"})
        with pytest.raises(ParseError):
            model_from_dict({"kind": "linear", "weights": [1.0]})
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_model(path)

    def test_feature_count_checked(self):
        with pytest.raises(InvalidParameterError):
            LinearModel([0.0, 1.0], 1.0).predict(np.ones((2, 3)))
        with pytest.raises(InvalidParameterError):
            MulticlassLogistic(np.zeros((2, 2))).predict_proba(np.ones((2, 3)))

    def test_to_dict_is_json(self):
        json.dumps(LinearModel([0.0, 1.0], 1.0).to_dict())
