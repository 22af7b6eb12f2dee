import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import betaln

from collision_channel import (
    FoldedLaw,
    InvalidParameterError,
    ThresholdProblem,
    centralized_lower_bound,
    cost,
    make_distribution,
    optimal_threshold,
    order_stat_second_moment,
)
from collision_channel.lower_bound import (
    centralized_lower_bound_mc,
    order_stat_second_moments,
    top_k_lower_bound,
)

G1 = make_distribution("gaussian", 1.0)
L1 = make_distribution("laplace", 1.0)


class TestFoldedLaw:
    def test_endpoints(self):
        law = FoldedLaw(G1)
        assert law.cdf(0.0) == 0.0
        assert law.pdf(0.0) == pytest.approx(2 / math.sqrt(2 * math.pi))
        assert law.pdf(-1.0) == 0.0
        assert law.cdf(40.0) == 1.0

    def test_density_integrates(self):
        for d in (G1, L1):
            val, _ = integrate.quad(FoldedLaw(d).pdf, 0, np.inf)
            assert val == pytest.approx(1.0, abs=1e-10)


class TestOrderStatistics:
    @pytest.mark.parametrize("d", [G1, L1, make_distribution("gaussian", 0.3)])
    def test_single_sample(self, d):
        assert order_stat_second_moment(1, 1, d) == pytest.approx(d.second_moment, rel=1e-9)

    @pytest.mark.parametrize("d", [G1, L1])
    def test_sum_identity_n5(self, d):
        total = sum(order_stat_second_moment(5, i, d) for i in range(1, 6))
        assert total == pytest.approx(5 * d.second_moment, abs=1e-6)
        assert order_stat_second_moments(5, np.arange(1, 6), d).sum() == pytest.approx(5 * d.second_moment, abs=1e-6)

    def test_non_increasing_in_i(self):
        m = order_stat_second_moments(40, np.arange(1, 41), G1)
        assert np.all(np.diff(m) < 0)

    def test_scalar_and_vector_agree(self):
        idx = [1, 7, 50, 101, 400, 1000]
        vec = order_stat_second_moments(1000, idx, G1)
        for i, v in zip(idx, vec):
            assert order_stat_second_moment(1000, i, G1) == pytest.approx(v, rel=1e-8)

    def test_min_of_two_mc(self):
        # E[min(|X1|,|X2|)^2] by 10^7 draws
        rng = np.random.default_rng(3)
        z = np.abs(rng.standard_normal((10**7, 2))).min(axis=1) ** 2
        se = z.std(ddof=1) / math.sqrt(z.size)
        assert abs(order_stat_second_moment(2, 2, G1) - z.mean()) < 3 * se

    def test_min_of_two_closed_form(self):
        # P(min > z) = (1 - F_Z)^2, so E[min^2] = int 2 z (1-F_Z(z))^2 dz
        val, _ = integrate.quad(lambda z: 2 * z * G1.tail(z) ** 2, 0, np.inf, epsabs=0, epsrel=1e-12)
        assert order_stat_second_moment(2, 2, G1) == pytest.approx(val, rel=1e-9)

    def test_beta_weights(self):
        law = FoldedLaw(L1)
        for n, i in [(5, 1), (5, 3), (50, 10), (1000, 100)]:
            f = lambda z: math.exp((n - i) * math.log(law.cdf(z)) + (i - 1) * float(law.log_sf(z))
                                   + float(law.log_pdf(z)) - betaln(n - i + 1, i)) if z > 0 else 0.0
            val, _ = integrate.quad(f, 0, 60, points=[L1.inverse_tail(i / n)], limit=400, epsabs=0, epsrel=1e-11)
            assert val == pytest.approx(1.0, abs=1e-8)

    def test_bad_index(self):
        with pytest.raises(InvalidParameterError):
            order_stat_second_moment(5, 6, G1)
        with pytest.raises(InvalidParameterError):
            order_stat_second_moments(5, [0, 1], G1)


class TestCentralizedBound:
    def test_k_equals_n(self):
        assert centralized_lower_bound(ThresholdProblem(10, 10, G1)) == 0.0

    def test_k_zero(self):
        assert top_k_lower_bound(12, 0, L1) == pytest.approx(2.0, abs=1e-8)

    def test_monotone_in_k(self):
        vals = [top_k_lower_bound(60, k, G1) for k in range(0, 61)]
        assert np.all(np.diff(vals) <= 1e-12)

    @pytest.mark.parametrize("n,k", [(2, 1), (10, 3), (100, 10), (300, 60)])
    def test_dominated_by_cost(self, n, k):
        prob = ThresholdProblem(n, k, G1)
        jl = centralized_lower_bound(prob)
        assert np.all(jl <= cost(prob, np.linspace(0, 6, 400)))
        assert jl <= optimal_threshold(prob)[1]

    def test_n1000_k100_mc_1e4(self):
        prob = ThresholdProblem(1000, 100, G1)
        mean, se = centralized_lower_bound_mc(prob, 10**4, np.random.default_rng(17))
        assert abs(centralized_lower_bound(prob) - mean) < 3 * se

    def test_laplace_mc(self):
        prob = ThresholdProblem(50, 5, L1)
        mean, se = centralized_lower_bound_mc(prob, 2 * 10**5, np.random.default_rng(8))
        assert abs(centralized_lower_bound(prob) - mean) < 3 * se

    def test_scale(self):
        a = centralized_lower_bound(ThresholdProblem(80, 8, G1))
        b = centralized_lower_bound(ThresholdProblem(80, 8, make_distribution("gaussian", 2.0)))
        assert b == pytest.approx(4 * a, rel=1e-8)
