import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from collision_channel import (
    DomainError,
    InvalidParameterError,
    NumericalFailureError,
    ThresholdProblem,
    binomial_tail_F,
    bracket,
    cost,
    make_distribution,
    optimal_threshold,
    root_function_h,
)
from collision_channel.threshold import binomial_tail_F_from_p, unit_optimal_threshold


def exact_F(n, k, p):
    p = Fraction(p)
    q = 1 - p
    return sum(math.comb(n - 1, l) * q**l * p ** (n - 1 - l) for l in range(k))


def h_direct(prob, T):
    # the algebraic root function with plain factorials, small n only
    n, k, d = prob.n, prob.k, prob.dist
    p = d.folded_cdf(T)
    s = sum(math.factorial(k - 1) * math.factorial(n - 1 - k) / (math.factorial(j) * math.factorial(n - 1 - j))
            * (p / (1 - p)) ** (k - j - 1) for j in range(k))
    return T * T * p * s - d.truncated_second_moment(T)


def grid_argmin(prob, upper, points):
    T = np.linspace(0.0, upper, points)
    return T[np.argmin(cost(prob, T))], T[1] - T[0]


class TestProblem:
    @pytest.mark.parametrize("n,k", [(0, 1), (3, 0), (3, 4), (2.5, 1), (True, 1)])
    def test_rejects(self, n, k):
        with pytest.raises(InvalidParameterError):
            ThresholdProblem(n, k, make_distribution("gaussian", 1))

    def test_degenerate(self, gauss_problem):
        assert gauss_problem(4, 4).degenerate and not gauss_problem(4, 3).degenerate


class TestBinomialTail:
    def test_at_zero(self, gauss_problem):
        assert binomial_tail_F(gauss_problem(10, 3), 0.0) == 0.0

    def test_n3_k1(self):
        assert binomial_tail_F_from_p(3, 1, 0.5) == pytest.approx(0.25, abs=1e-15)

    def test_n2_k1(self):
        assert binomial_tail_F_from_p(2, 1, 0.7) == pytest.approx(0.7, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 30), st.data(), st.floats(0.0, 1.0))
    def test_exact_rational_oracle(self, n, data, p):
        k = data.draw(st.integers(1, n - 1))
        assert abs(binomial_tail_F_from_p(n, k, p) - float(exact_F(n, k, p))) < 1e-12

    def test_exact_oracle_via_threshold(self, gauss_problem):
        for n, k in [(5, 2), (17, 4), (30, 29), (30, 1)]:
            prob = gauss_problem(n, k)
            for T in (0.2, 1.0, 2.5):
                p = prob.dist.folded_cdf(T)
                assert abs(binomial_tail_F(prob, T) - float(exact_F(n, k, p))) < 1e-12

    def test_matches_scipy_large_n(self, gauss_problem):
        prob = gauss_problem(5000, 400)
        T = np.array([1.0, 1.6, 1.75, 2.0])
        q = 1 - prob.dist.folded_cdf(T)
        ref = stats.binom.cdf(prob.k - 1, prob.n - 1, q)
        np.testing.assert_allclose(binomial_tail_F(prob, T), ref, rtol=1e-9, atol=1e-300)

    def test_nondecreasing(self, gauss_problem):
        F = binomial_tail_F(gauss_problem(200, 20), np.linspace(0, 5, 500))
        assert np.all(np.diff(F) >= -1e-15) and F.min() >= 0 and F.max() <= 1


class TestCost:
    def test_endpoints(self, gauss_problem):
        for scale in (0.5, 1.0, 3.0):
            prob = gauss_problem(10, 3, scale)
            assert cost(prob, 0.0) == pytest.approx(scale**2, rel=1e-15)
            assert cost(prob, 60 * scale) == pytest.approx(scale**2, rel=1e-15)

    def test_n2_k1_t1(self, gauss_problem):
        prob = gauss_problem(2, 1)
        m2 = 2 * (stats.norm.pdf(1) + stats.norm.sf(1))
        p1 = 2 * stats.norm.cdf(1) - 1
        assert cost(prob, 1.0) == pytest.approx(1 - m2 * p1, rel=1e-13)
        assert cost(prob, 1.0) == pytest.approx(0.45300, abs=1e-4)

    def test_bounded(self, gauss_problem):
        prob = gauss_problem(100, 10)
        J = cost(prob, np.linspace(0, 8, 1000))
        assert np.all((J >= 0) & (J <= 1))

    def test_laplace_k_n_minus_one(self):
        # every other sensor may transmit except when all n-1 do: F = 1 - q^(n-1)
        prob = ThresholdProblem(6, 5, make_distribution("laplace", 2.0))
        T = 0.7
        q = math.exp(-T / 2)
        expected = 8 - prob.dist.truncated_second_moment(T) * (1 - q**5)
        assert cost(prob, T) == pytest.approx(expected, rel=1e-13)

    def test_negative_threshold(self, gauss_problem):
        with pytest.raises(DomainError):
            cost(gauss_problem(3, 1), -1.0)

    def test_channel_simulation_n10(self, gauss_problem):
        prob = gauss_problem(10, 3)
        rng = np.random.default_rng(11)
        x = rng.standard_normal((200_000, 10))
        T = 1.2
        tx = np.abs(x) >= T
        err = np.where(tx.sum(1, keepdims=True) > 3, x * x, np.where(tx, 0, x * x)).mean(1)
        se = err.std(ddof=1) / math.sqrt(err.size)
        assert abs(err.mean() - cost(prob, T)) < 3 * se


class TestRootFunction:
    @pytest.mark.parametrize("n,k", [(2, 1), (5, 2), (12, 7), (20, 19)])
    def test_matches_factorial_form(self, gauss_problem, n, k):
        prob = gauss_problem(n, k)
        for T in (0.3, 1.0, 1.9):
            assert root_function_h(prob, T) == pytest.approx(h_direct(prob, T), rel=1e-11, abs=1e-14)

    def test_sign_matches_derivative(self, gauss_problem):
        prob = gauss_problem(30, 4, 1.7)
        for T in np.linspace(0.5, 5, 19):
            eps = 1e-6
            dJ = (cost(prob, T + eps) - cost(prob, T - eps)) / (2 * eps)
            if abs(dJ) > 1e-7:
                assert np.sign(root_function_h(prob, T)) == np.sign(dJ)

    def test_n2_k1_sign_change(self, gauss_problem):
        prob = gauss_problem(2, 1)
        assert root_function_h(prob, 1.0) < 0 < root_function_h(prob, 2.0)
        T = np.linspace(0, 6, 60001)
        tmin = T[np.argmin(cost(prob, T))]
        assert 1.0 < tmin < 2.0

    def test_domain(self, gauss_problem):
        with pytest.raises(DomainError):
            root_function_h(gauss_problem(5, 2), 0.0)
        with pytest.raises(DomainError):
            root_function_h(gauss_problem(5, 5), 1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 400), st.data(), st.floats(0.1, 10))
    def test_strictly_increasing(self, n, data, scale):
        k = data.draw(st.integers(1, n - 1))
        prob = ThresholdProblem(n, k, make_distribution("gaussian", scale))
        b = bracket(prob)
        T = np.linspace(b.lo / 2, 2 * b.hi, 300)
        h = root_function_h(prob, T)
        assert np.all(np.diff(h) > 0)


class TestBracket:
    def test_n1000_k100(self, gauss_problem):
        prob = gauss_problem(1000, 100)
        b = bracket(prob)
        assert b.lo == pytest.approx(1.6449, abs=1e-3)
        assert b.lo == pytest.approx(stats.norm.ppf(0.95), rel=1e-12)
        q = (100 - 3 * math.sqrt(200)) / 999
        assert b.hi == pytest.approx(stats.norm.isf(q / 2), rel=1e-12)
        assert b.s_bar == 3.0
        assert root_function_h(prob, b.lo) < 0 < root_function_h(prob, b.hi)

    def test_expansion_small_k(self, gauss_problem):
        # k <= 2 s_bar^2: the formula gives no hi, doubling must find one
        for n, k in [(2, 1), (50, 5), (3000, 17)]:
            prob = gauss_problem(n, k)
            b = bracket(prob)
            assert b.lo <= b.hi
            assert root_function_h(prob, b.hi) >= 0

    def test_degenerate(self, gauss_problem):
        with pytest.raises(DomainError):
            bracket(gauss_problem(5, 5))

    def test_bad_s_bar(self, gauss_problem):
        with pytest.raises(InvalidParameterError):
            bracket(gauss_problem(5, 2), s_bar=0)


class TestOptimalThreshold:
    def test_degenerate(self, gauss_problem):
        assert optimal_threshold(gauss_problem(7, 7)) == (0.0, 0.0)

    def test_n2_k1_grid(self, gauss_problem):
        prob = gauss_problem(2, 1)
        t_star, j_star = optimal_threshold(prob)
        tg, dt = grid_argmin(prob, 6.0, 10**5)
        assert abs(t_star - tg) <= dt
        assert j_star == pytest.approx(cost(prob, t_star), rel=1e-15)

    def test_n1000_k100(self, gauss_problem):
        prob = gauss_problem(1000, 100)
        t_star, j_star = optimal_threshold(prob)
        b = bracket(prob)
        assert b.lo < t_star < b.hi
        tg, dt = grid_argmin(prob, 2 * b.hi, 10**5)
        assert abs(t_star - tg) <= dt
        assert t_star == pytest.approx(1.7360503573759418, rel=1e-8)
        assert abs(root_function_h(prob, t_star)) < 1e-8

    def test_tolerance_respected(self, gauss_problem):
        prob = gauss_problem(40, 6)
        coarse, _ = optimal_threshold(prob, tol=1e-3)
        fine, _ = optimal_threshold(prob, tol=1e-12)
        assert abs(coarse - fine) <= 1e-3 * max(1, fine)

    def test_scale_equivariance(self, gauss_problem):
        t1, j1 = optimal_threshold(gauss_problem(60, 7, 1.0))
        t3, j3 = optimal_threshold(gauss_problem(60, 7, 3.0))
        assert t3 == pytest.approx(3 * t1, rel=1e-8)
        assert j3 == pytest.approx(9 * j1, rel=1e-8)

    def test_unit_cache(self):
        assert unit_optimal_threshold(1000, 100) == optimal_threshold(
            ThresholdProblem(1000, 100, make_distribution("gaussian", 1.0)))[0]

    def test_bad_tol(self, gauss_problem):
        with pytest.raises(InvalidParameterError):
            optimal_threshold(gauss_problem(5, 2), tol=0)

    def test_laplace(self):
        prob = ThresholdProblem(200, 20, make_distribution("laplace", 1.0))
        t_star, _ = optimal_threshold(prob)
        tg, dt = grid_argmin(prob, 2 * bracket(prob).hi, 10**5)
        assert abs(t_star - tg) <= dt
        assert t_star >= prob.dist.inverse_tail(20 / 200)

    def test_failure_is_loud(self, gauss_problem, monkeypatch):
        import collision_channel.threshold as th
        monkeypatch.setattr(th, "_h_sign", lambda prob, T: -1)
        with pytest.raises(NumericalFailureError):
            th.optimal_threshold(gauss_problem(50, 5))


class TestSignedLog:
    def test_matches_h(self, gauss_problem):
        from collision_channel.threshold import signed_log_root_function
        prob = gauss_problem(300, 40, 2.0)
        T = np.linspace(0.05, 8, 200)
        h = root_function_h(prob, T)
        np.testing.assert_allclose(signed_log_root_function(prob, T), np.sign(h) * np.log1p(np.abs(h)), rtol=1e-12)

    def test_no_overflow(self, gauss_problem):
        from collision_channel.threshold import signed_log_root_function
        prob = gauss_problem(2000, 1000)
        with np.errstate(over="ignore"):
            assert root_function_h(prob, 5.0) == np.inf
        v = signed_log_root_function(prob, np.array([4.9, 5.0, 5.1]))
        assert np.all(np.isfinite(v)) and np.all(np.diff(v) > 0) and v[0] > 700
