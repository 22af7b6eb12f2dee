"""Centralised "top-k" benchmark.

A genie scheduler that sends the k largest magnitudes achieves

    J_L = (1/n) * sum_{i=k+1}^{n} E[Z_(i)^2],   Z = |X|,

with ``Z_(1) >= ... >= Z_(n)``. Each order-statistic moment is a
beta-weighted integral over the folded law, evaluated in log space so the
weights neither underflow nor overflow at n in the thousands.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betaln, xlogy

from .distributions import SymmetricDistribution
from .errors import InvalidParameterError, NumericalFailureError
from .threshold import ThresholdProblem

QUAD_RTOL = 1e-10
MC_FALLBACK_N = 5000


@dataclass(frozen=True)
class FoldedLaw:
    """Law of Z = |X|."""

    base: SymmetricDistribution

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(z >= 0, 2.0 * np.asarray(self.base.pdf(z)), 0.0)

    def cdf(self, z):
        return self.base.folded_cdf(np.maximum(np.asarray(z, dtype=float), 0.0))

    def log_pdf(self, z):
        with np.errstate(divide="ignore"):
            return np.log(2.0 * np.asarray(self.base.pdf(z), dtype=float))

    def log_cdf(self, z):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.base.folded_cdf(z), dtype=float))

    def log_sf(self, z):
        return np.asarray(self.base.log_tail(z), dtype=float)


def _beta_sd(a: float, b: float) -> float:
    s = a + b
    return math.sqrt(a * b / (s * s * (s + 1.0)))


def _breakpoints(n: int, i: int, law: FoldedLaw, z_max: float) -> list[float]:
    # the weight F^(n-i) (1-F)^(i-1) is a beta density in u = F(z); split the
    # z-range at its mode and a few standard deviations either side
    a, b = n - i + 1.0, float(i)
    mode = (a - 1.0) / (a + b - 2.0) if n > 1 else 0.5
    sd = _beta_sd(a, b)
    pts = {0.0, z_max}
    for m in (-8, -4, -2, -1, 0, 1, 2, 4, 8):
        u = mode + m * sd
        if 0.0 < u < 1.0:
            z = law.base.inverse_tail(1.0 - u) if u > 0.5 else law.base.inverse_folded_cdf(u)
            if 0.0 < z < z_max:
                pts.add(float(z))
    return sorted(pts)


def order_stat_moment_integrand(n: int, i: int, law: FoldedLaw):
    """z -> z^2 f_(i)(z), the order-statistic density times z^2."""
    log_b = betaln(n - i + 1, i)

    def f(z):
        if z <= 0.0:
            return 0.0
        log_val = (2.0 * math.log(z) + xlogy(n - i, law.cdf(z)) + (i - 1) * law.log_sf(z)
                   + law.log_pdf(z) - log_b)
        return math.exp(log_val)

    return f


def order_stat_second_moment(n: int, i: int, law: FoldedLaw | SymmetricDistribution) -> float:
    """E[Z_(i)^2] for the i-th largest of n i.i.d. magnitudes."""
    if isinstance(law, SymmetricDistribution):
        law = FoldedLaw(law)
    if int(n) != n or n < 1 or int(i) != i or not 1 <= i <= n:
        raise InvalidParameterError(f"need integers 1 <= i <= n, got i={i!r}, n={n!r}")
    n, i = int(n), int(i)
    # beyond z_max the mass 1 - F_Z is below 1e-16 / n
    z_max = law.base.inverse_tail(1e-16 / n)
    f = order_stat_moment_integrand(n, i, law)
    pts = _breakpoints(n, i, law, z_max)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(pts[:-1], pts[1:]):
            try:
                val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
            except integrate.IntegrationWarning as exc:
                raise NumericalFailureError(
                    f"quadrature did not converge for n={n}, i={i} on [{a:.6g}, {b:.6g}]: {exc}") from None
            total += val
    return total


def order_stat_second_moments(n: int, i, law: FoldedLaw | SymmetricDistribution) -> np.ndarray:
    """E[Z_(i)^2] for an array of indices, as one vector-valued quadrature."""
    if isinstance(law, SymmetricDistribution):
        law = FoldedLaw(law)
    i = np.atleast_1d(np.asarray(i, dtype=float))
    if np.any((i < 1) | (i > n) | (i != np.round(i))):
        raise InvalidParameterError(f"indices must be integers in [1, {n}]")
    if i.size == 0:
        return np.zeros(0)
    log_b = betaln(n - i + 1, i)
    base = law.base
    z_max = base.inverse_tail(1e-16 / n)

    def f(z):
        if z <= 0.0:
            return np.zeros_like(i)
        lv = (2.0 * math.log(z) + xlogy(n - i, base.folded_cdf(z)) + (i - 1) * base.log_tail(z)
              + math.log(2.0 * base.pdf(z)) - log_b)
        return np.exp(lv)

    pts = [base.inverse_folded_cdf(u) for u in (0.5, 0.8, 0.9, 0.95, 0.99)]
    val, _, info = integrate.quad_vec(f, 0.0, z_max, epsrel=QUAD_RTOL, norm="max",
                                      points=pts, limit=20000, full_output=True)
    if not info.success:
        raise NumericalFailureError(f"vector quadrature failed for n={n}: {info.message}")
    return val


def top_k_lower_bound(n: int, k: int, dist: SymmetricDistribution) -> float:
    """(1/n) sum_{i=k+1}^{n} E[Z_(i)^2]; allows k = 0 (nobody transmits)."""
    if int(n) != n or n < 1 or int(k) != k or not 0 <= k <= n:
        raise InvalidParameterError(f"need integers 0 <= k <= n, got k={k!r}, n={n!r}")
    n, k = int(n), int(k)
    if k == n:
        return 0.0
    return float(order_stat_second_moments(n, np.arange(k + 1, n + 1), dist).sum() / n)


def centralized_lower_bound(prob: ThresholdProblem) -> float:
    """J_L for the problem's (n, k, dist) by quadrature."""
    return top_k_lower_bound(prob.n, prob.k, prob.dist)


def centralized_lower_bound_mc(prob: ThresholdProblem, trials: int,
                               rng: np.random.Generator, batch: int = 1000) -> tuple[float, float]:
    """Monte Carlo estimate of J_L and its standard error.

    Each trial draws n measurements and keeps the n - k smallest squares
    (a partial sort is enough for their sum).

    Intended for very large n (above ``MC_FALLBACK_N``) where the n - k
    quadratures get slow.
    """
    n, k = prob.n, prob.k
    vals = []
    left = trials
    while left > 0:
        m = min(batch, left)
        z2 = np.square(prob.dist.sample(rng, (m, n)))
        if k < n:
            z2 = np.partition(z2, n - k - 1, axis=1)
        vals.append(z2[:, : n - k].sum(axis=1) / n)
        left -= m
    v = np.concatenate(vals)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.inf
