import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dpreg.core_math import (SIMPLEX_ATOL, build_grid, check_simplex, lse, neg_entropy,
                             policy_probs, policy_scores, r_vector, softmax, t_vector)
from dpreg.errors import DegenerateGroupError, InvalidParameterError

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vectors = arrays(float, st.integers(1, 64), elements=finite)


class TestGrid:
    def test_two_halves(self):
        np.testing.assert_allclose(build_grid(1.0, 2).atoms, [-1, -0.5, 0, 0.5, 1])

    def test_three_atoms(self):
        np.testing.assert_allclose(build_grid(2.0, 1).atoms, [-2, 0, 2])

    def test_count_and_center(self):
        g = build_grid(1.0, 16)
        assert g.size == 33 and g.atoms.size == 33
        assert g.atoms[16] == 0.0

    @pytest.mark.parametrize("B,L", [(0.0, 2), (-1.0, 2), (1.0, 0), (1.0, 1.5), (math.inf, 3)])
    def test_rejects_bad_parameters(self, B, L):
        with pytest.raises(InvalidParameterError):
            build_grid(B, L)

    @given(st.floats(1e-3, 1e3), st.integers(1, 200))
    def test_invariants(self, B, L):
        a = build_grid(B, L).atoms
        assert np.all(np.diff(a) > 0)
        np.testing.assert_allclose(a, -a[::-1], atol=1e-12 * B)
        assert a[0] == -B and a[-1] == B
        np.testing.assert_allclose(np.diff(a), B / L, rtol=1e-9)


class TestLse:
    def test_single_element(self):
        assert lse([3.7], 0.3) == pytest.approx(3.7, abs=1e-15)

    def test_two_zeros(self):
        assert lse([0.0, 0.0], 1.0) == pytest.approx(0.6931471805599453, abs=1e-15)

    def test_no_overflow(self):
        assert lse([1000.0, 1000.0], 1.0) == pytest.approx(1000.6931471805599, abs=1e-12)

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            lse([], 1.0)

    def test_rows(self):
        out = lse(np.array([[0.0, 0.0], [1.0, 1.0]]), 1.0)
        np.testing.assert_allclose(out, [math.log(2), 1 + math.log(2)])

    @given(vectors, st.floats(0.01, 100))
    def test_sandwich(self, w, beta):
        v = lse(w, beta)
        assert w.max() - 1e-9 <= v <= w.max() + math.log(w.size) / beta + 1e-9

    @given(arrays(float, st.integers(1, 10), elements=st.floats(-5, 5)), st.floats(0.1, 10))
    def test_gradient_is_softmax(self, w, beta):
        h = 1e-6
        fd = np.array([(lse(w + h * e, beta) - lse(w - h * e, beta)) / (2 * h)
                       for e in np.eye(w.size)])
        sm = softmax(beta * w)
        np.testing.assert_allclose(fd, sm, rtol=1e-5, atol=1e-7)

    @given(vectors, st.floats(0.01, 100))
    def test_variational_identity(self, w, beta):
        q = softmax(beta * w)
        assert lse(w, beta) == pytest.approx(w @ q - neg_entropy(q) / beta, abs=1e-9)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.full(7, 2.5)), np.full(7, 1 / 7))

    def test_closed_form(self):
        np.testing.assert_allclose(softmax([0.0, math.log(3)]), [0.25, 0.75], atol=1e-15)

    @given(vectors)
    def test_shift_invariance(self, w):
        np.testing.assert_allclose(softmax(w + 17.0), softmax(w), atol=1e-12)

    @given(vectors)
    def test_simplex(self, w):
        check_simplex(softmax(w))

    @given(arrays(float, st.integers(2, 10), elements=st.floats(-5, 5)),
           st.integers(0, 9), st.floats(0.01, 3))
    def test_monotone(self, w, j, bump):
        j %= w.size
        w2 = w.copy()
        w2[j] += bump
        assert softmax(w2)[j] >= softmax(w)[j]

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            softmax(np.array([]))


class TestNegEntropy:
    def test_uniform(self):
        assert neg_entropy(np.full(5, 0.2)) == pytest.approx(-math.log(5))

    def test_point_mass(self):
        assert neg_entropy([0.0, 1.0, 0.0]) == 0.0

    def test_two_point(self):
        assert neg_entropy([0.25, 0.75]) == pytest.approx(-0.5623351446188083, abs=1e-15)

    def test_rejects_non_simplex(self):
        with pytest.raises(InvalidParameterError):
            neg_entropy([0.5, 0.6])

    @given(arrays(float, st.integers(1, 30), elements=st.floats(0, 1)))
    def test_range(self, v):
        if v.sum() == 0:
            v = np.ones_like(v)
        v = v / v.sum()
        h = neg_entropy(v)
        assert -math.log(v.size) - 1e-12 <= h <= 1e-15


def test_simplex_tolerance():
    check_simplex([0.5, 0.5 + 0.5 * SIMPLEX_ATOL])
    with pytest.raises(InvalidParameterError):
        check_simplex([0.5, 0.5 + 3 * SIMPLEX_ATOL])
    with pytest.raises(InvalidParameterError):
        check_simplex([1.1, -0.1])


class TestTVector:
    def test_calibrated_point(self):
        p = np.array([0.2, 0.3, 0.5])
        np.testing.assert_array_equal(t_vector(p, p), np.zeros(3))

    def test_formula(self):
        np.testing.assert_allclose(t_vector([1.0, 0.0], [0.5, 0.5]), [-1.0, 1.0])

    def test_zero_marginal(self):
        with pytest.raises(DegenerateGroupError):
            t_vector([0.5, 0.5], [1.0, 0.0])

    @given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
    def test_weighted_sum_vanishes(self, K, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(K)) + 1e-3
        p /= p.sum()
        tau = rng.dirichlet(np.ones(K))
        assert abs(p @ t_vector(tau, p)) <= 1e-12


class TestRVector:
    def test_formula(self):
        np.testing.assert_allclose(r_vector(0.0, build_grid(1.0, 1)), [1.0, 0.0, 1.0])

    @given(st.integers(1, 20), st.data())
    def test_atom_hit(self, L, data):
        g = build_grid(1.7, L)
        j = data.draw(st.integers(0, 2 * L))
        r = r_vector(g.atoms[j], g)
        assert r[j] == 0.0
        assert np.all(r >= 0) and np.count_nonzero(r == 0) == 1

    def test_batch_shape(self):
        assert r_vector(np.zeros(4), build_grid(1.0, 3)).shape == (4, 7)


class TestPolicyProbs:
    def test_zero_dual_is_nearest_atom(self):
        g = build_grid(1.0, 2)
        r = r_vector(0.3, g)
        pi = policy_probs(np.zeros((2, 5, 2)), np.array([0.4, -0.6]), r, 3.0)
        np.testing.assert_allclose(pi, softmax(-3.0 * r))
        assert np.argmax(pi) == np.argmin(r)

    def test_equal_multipliers_cancel(self):
        rng = np.random.default_rng(0)
        lam = rng.random((5, 2))
        t, r = np.array([0.4, -0.6]), r_vector(0.3, build_grid(1.0, 2))
        np.testing.assert_allclose(policy_probs(np.stack([lam, lam]), t, r, 2.0),
                                   policy_probs(np.zeros((2, 5, 2)), t, r, 2.0))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidParameterError):
            policy_probs(np.zeros((2, 3, 2)), np.zeros(3), np.zeros(3), 1.0)
        with pytest.raises(InvalidParameterError):
            policy_probs(np.zeros((2, 3, 2)), np.zeros(2), np.zeros(4), 1.0)

    def test_matches_variational_maximizer(self):
        # brute-force argmax of <w, q> - neg_entropy(q) / beta over a zooming simplex grid
        rng = np.random.default_rng(5)
        beta = 1.3
        dual = rng.random((2, 3, 2))
        t = np.array([0.7, -0.7])
        r = r_vector(0.2, build_grid(1.0, 1))
        w = (dual[0] - dual[1]) @ t - r

        def objective(q1, q2):
            q = np.stack([q1, q2, 1 - q1 - q2])
            with np.errstate(divide="ignore", invalid="ignore"):
                ent = np.where(q > 0, q * np.log(q), 0.0).sum(axis=0)
            val = np.tensordot(w, q, axes=1) - ent / beta
            return np.where(q.min(axis=0) >= 0, val, -np.inf)

        c1, c2, half = 0.5, 0.5, 0.5
        for _ in range(8):
            a = np.linspace(max(c1 - half, 0), min(c1 + half, 1), 201)
            b = np.linspace(max(c2 - half, 0), min(c2 + half, 1), 201)
            A, Bm = np.meshgrid(a, b, indexing="ij")
            vals = objective(A, Bm)
            i, j = np.unravel_index(np.argmax(vals), vals.shape)
            c1, c2 = a[i], b[j]
            half /= 20
        pi = policy_probs(dual, t, r, beta)
        np.testing.assert_allclose(pi, [c1, c2, 1 - c1 - c2], atol=1e-4)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 1e4))
    def test_valid_simplex(self, seed, beta):
        rng = np.random.default_rng(seed)
        dual = rng.exponential(5.0, size=(2, 7, 3))
        t = rng.normal(size=3) * 10
        r = r_vector(rng.uniform(-1, 1), build_grid(1.0, 3))
        check_simplex(policy_probs(dual, t, r, beta))

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(1)
        dual = rng.random((2, 5, 3))
        t = rng.normal(size=(4, 3))
        r = r_vector(rng.uniform(-1, 1, 4), build_grid(1.0, 2))
        batch = policy_scores(dual, t, r, 2.0)
        for i in range(4):
            np.testing.assert_array_equal(batch[i], policy_scores(dual, t[i], r[i], 2.0))
