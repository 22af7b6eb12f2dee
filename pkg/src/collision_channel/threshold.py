"""Optimal common transmission threshold for n sensors on a capacity-k channel.

Every sensor transmits iff ``|x| >= T``. The fusion center recovers the
transmitted values when at most ``k`` sensors transmit and otherwise
estimates zero, giving the per-sensor MSE

    J(T) = E[X^2] - E[X^2 1(|X| >= T)] * F(T)

where ``F(T)`` is the probability that at most ``k - 1`` of the other
``n - 1`` sensors transmit. ``J`` is strictly quasi-convex and its minimiser
is the unique zero of the strictly increasing function ``h`` (the
derivative of ``J`` divided by the positive density of ``F``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .distributions import SymmetricDistribution, make_distribution
from .errors import DomainError, InvalidParameterError, NumericalFailureError

DEFAULT_S_BAR = 3.0
DEFAULT_TOL = 1e-9
MAX_EXPANSIONS = 60


@dataclass(frozen=True)
class ThresholdProblem:
    n: int
    k: int
    dist: SymmetricDistribution

    def __post_init__(self):
        n, k = self.n, self.k
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise InvalidParameterError(f"n must be an integer >= 1, got {n!r}")
        if isinstance(k, bool) or int(k) != k or k < 1 or k > n:
            raise InvalidParameterError(f"k must be an integer with 1 <= k <= n, got k={k!r}, n={n!r}")
        if not isinstance(self.dist, SymmetricDistribution):
            raise InvalidParameterError("dist must be a SymmetricDistribution")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "k", int(k))

    @property
    def degenerate(self) -> bool:
        """Capacity covers every sensor."""
        return self.k == self.n


class Bracket(NamedTuple):
    lo: float
    hi: float
    s_bar: float


def _log_p_q(dist, T):
    """log P(|X| < T) and log P(|X| >= T), each accurate in its own tail."""
    T = np.asarray(T, dtype=float)
    log_q = np.asarray(dist.log_tail(T), dtype=float)
    p = np.asarray(dist.folded_cdf(T), dtype=float)
    with np.errstate(divide="ignore"):
        log_p = np.where(p < 0.5, np.log(np.maximum(p, 0.0)), np.log1p(-np.exp(log_q)))
    return log_p, log_q


def _times_log(c, log_v):
    # c * log v with the convention 0 * log 0 = 0
    with np.errstate(invalid="ignore"):
        return np.where(c == 0, 0.0, c * log_v)


def _log_lower_tail(m: int, j: int, log_p, log_q):
    """log P(Bin(m, q) <= j) from log p = log(1-q) and log q, vectorised in p."""
    ell = np.arange(j + 1, dtype=float)
    log_binom = gammaln(m + 1) - gammaln(ell + 1) - gammaln(m - ell + 1)
    log_p = np.asarray(log_p, dtype=float)[..., None]
    log_q = np.asarray(log_q, dtype=float)[..., None]
    terms = log_binom + _times_log(ell, log_q) + _times_log(m - ell, log_p)
    return np.minimum(logsumexp(terms, axis=-1), 0.0)


def binomial_tail_F(prob: ThresholdProblem, T):
    """P(at most k-1 of the other n-1 sensors transmit) at threshold T."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise DomainError("threshold must be non-negative")
    log_p, log_q = _log_p_q(prob.dist, T)
    out = np.exp(_log_lower_tail(prob.n - 1, prob.k - 1, log_p, log_q))
    return float(out) if out.ndim == 0 else out


def binomial_tail_F_from_p(n: int, k: int, p):
    """Same sum written directly in terms of p = P(|X| < T)."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(_log_lower_tail(n - 1, k - 1, np.log(p), np.log1p(-p)))
    return float(out) if out.ndim == 0 else out


def cost(prob: ThresholdProblem, T):
    """Normalised MSE J(T); vectorised in T."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise DomainError("threshold must be non-negative")
    d = prob.dist
    out = d.second_moment - np.asarray(d.truncated_second_moment(T)) * binomial_tail_F(prob, T)
    out = np.clip(out, 0.0, d.second_moment)
    return float(out) if out.ndim == 0 else out


def _log_h_positive_part(prob: ThresholdProblem, T):
    n, k = prob.n, prob.k
    log_p, log_q = _log_p_q(prob.dist, T)
    j = np.arange(k, dtype=float)
    coeff = gammaln(k) + gammaln(n - k) - gammaln(j + 1) - gammaln(n - j)
    ratio = (log_p - log_q)[..., None]
    s = logsumexp(coeff + (k - j - 1) * ratio, axis=-1)
    return 2.0 * np.log(T) + log_p + s


def root_function_h(prob: ThresholdProblem, T):
    """h(T) = T^2 p sum_j c_j (p/(1-p))^(k-j-1) - E[X^2 1(|X| >= T)].

    Has the sign of J'(T) and is strictly increasing on T > 0. Requires k < n.
    """
    if prob.degenerate:
        raise DomainError("h is undefined when k == n")
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0) or np.any(np.isnan(T)):
        raise DomainError("h is defined for T > 0 only")
    with np.errstate(over="ignore"):
        out = np.exp(_log_h_positive_part(prob, T)) - np.asarray(prob.dist.truncated_second_moment(T))
    return float(out) if out.ndim == 0 else out


def signed_log_root_function(prob: ThresholdProblem, T):
    """sign(h) * log(1 + |h|), evaluated without overflow.

    h itself exceeds the double range for large T (its positive part grows
    like (p/(1-p))^(k-1)); this strictly increasing transform of h does not.
    """
    if prob.degenerate:
        raise DomainError("h is undefined when k == n")
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0) or np.any(np.isnan(T)):
        raise DomainError("h is defined for T > 0 only")
    log_a = np.asarray(_log_h_positive_part(prob, T), dtype=float)
    b = np.asarray(prob.dist.truncated_second_moment(T), dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        h = np.exp(log_a) - b
        small = np.sign(h) * np.log1p(np.abs(h))
        # huge positive h: log h = log a + log1p(-b/a), and log1p(h) = log h to double precision
        big = log_a + np.log1p(-b * np.exp(-log_a))
    out = np.where(log_a < 700.0, small, big)
    return float(out) if out.ndim == 0 else out


def _h_sign(prob, T: float) -> int:
    # sign of h via logs, so huge/tiny magnitudes cannot overflow the comparison
    tail = prob.dist.truncated_second_moment(T)
    if tail <= 0.0:
        return 1
    diff = float(_log_h_positive_part(prob, T)) - math.log(tail)
    return (diff > 0) - (diff < 0)


def bracket(prob: ThresholdProblem, s_bar: float = DEFAULT_S_BAR) -> Bracket:
    """Interval [lo, hi] with h(lo) <= 0 <= h(hi).

    ``lo = p^-1(1 - k/n)`` is a proven lower bound on the optimum. ``hi`` comes
    from the Chernoff phase-transition bound with slack ``s_bar``; when that
    bound is not available (k <= 2 s_bar^2) or does not change the sign of h,
    the width is doubled until it does.
    """
    if prob.degenerate:
        raise DomainError("no bracket for the degenerate case k == n")
    if not s_bar > 0:
        raise InvalidParameterError(f"s_bar must be positive, got {s_bar!r}")
    n, k, d = prob.n, prob.k, prob.dist
    lo = d.inverse_tail(k / n)
    if _h_sign(prob, lo) > 0:
        raise NumericalFailureError(f"h(lo) > 0 at lo={lo!r}; lower bound violated numerically")

    slack = k - s_bar * math.sqrt(2 * k)
    if slack > 0:
        hi = d.inverse_tail(slack / (n - 1))
    else:
        hi = 2.0 * lo
    for _ in range(MAX_EXPANSIONS):
        if _h_sign(prob, hi) >= 0:
            return Bracket(lo, hi, s_bar)
        hi = lo + 2.0 * (hi - lo)
    raise NumericalFailureError(f"no sign change of h found after {MAX_EXPANSIONS} expansions (n={n}, k={k})")


def optimal_threshold(prob: ThresholdProblem, tol: float = DEFAULT_TOL,
                      s_bar: float = DEFAULT_S_BAR) -> tuple[float, float]:
    """Return ``(T_star, J(T_star))``.

    Bisection on the sign of h inside :func:`bracket`; stops when the bracket
    width is at most ``tol * max(1, T)``. With ``k == n`` everyone can transmit
    and the answer is ``(0, 0)``.
    """
    if not tol > 0:
        raise InvalidParameterError(f"tol must be positive, got {tol!r}")
    if prob.degenerate:
        return 0.0, 0.0
    lo, hi, _ = bracket(prob, s_bar)
    for _ in range(400):
        if hi - lo <= tol * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        sgn = _h_sign(prob, mid)
        if sgn == 0:
            lo = hi = mid
            break
        if sgn < 0:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericalFailureError("bisection did not reach the requested tolerance")
    t_star = 0.5 * (lo + hi)
    return t_star, cost(prob, t_star)


@lru_cache(maxsize=256)
def unit_optimal_threshold(n: int, k: int, family: str = "gaussian", tol: float = DEFAULT_TOL) -> float:
    """Optimal threshold for the unit-scale member of ``family``.

    Both shipped families are scale families, so the optimum for scale s is
    ``s * unit_optimal_threshold(...)``.
    """
    return optimal_threshold(ThresholdProblem(n, k, make_distribution(family, 1.0)), tol)[0]
