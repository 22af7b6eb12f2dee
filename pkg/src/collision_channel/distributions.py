"""Zero-mean symmetric laws with everywhere-positive density.

All methods accept scalars or numpy arrays. The folded quantities refer to
the magnitude ``|X|``: ``folded_cdf(T) = P(|X| < T)`` and
``tail(T) = P(|X| >= T)``. Tails are computed directly rather than as
``1 - folded_cdf`` so that they stay accurate far out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import special

from .errors import DomainError, InvalidParameterError

_SQRT2 = math.sqrt(2.0)


def _nonneg(T, name="T"):
    arr = np.asarray(T, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must be non-negative, got {T!r}")
    return arr


def _out(arr):
    # scalars in, python floats out
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True)
class SymmetricDistribution:
    """Base class; subclasses supply the closed forms.

    ``inverse_folded_cdf`` falls back to bisection on ``folded_cdf`` so a new
    family only needs pdf/cdf/tail/truncated moment to be usable.
    """

    scale: float
    family: ClassVar[str] = ""

    def __post_init__(self):
        s = self.scale
        if not isinstance(s, (int, float, np.floating, np.integer)) or not math.isfinite(s) or s <= 0:
            raise InvalidParameterError(f"scale must be a positive finite number, got {s!r}")
        object.__setattr__(self, "scale", float(s))

    # -- to be provided by subclasses --------------------------------------
    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def tail(self, T):
        """P(|X| >= T)."""
        raise NotImplementedError

    def truncated_second_moment(self, T):
        """E[X^2 1(|X| >= T)]."""
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    # -- generic ----------------------------------------------------------
    def folded_cdf(self, T):
        """p(T) = P(|X| < T) = 2 cdf(T) - 1."""
        T = _nonneg(T)
        return _out(-np.expm1(self.log_tail(T)))

    def log_tail(self, T):
        T = _nonneg(T)
        with np.errstate(divide="ignore"):
            return _out(np.log(self.tail(T)))

    def inverse_folded_cdf(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0) or np.any(q >= 1) or np.any(np.isnan(q)):
            raise DomainError(f"probability must lie in [0, 1), got {q!r}")
        return _out(np.vectorize(self._bisect_folded)(q))

    def inverse_tail(self, r):
        """T with P(|X| >= T) = r, for r in (0, 1]."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r > 1):
            raise DomainError(f"tail probability must lie in (0, 1], got {r!r}")
        return _out(np.vectorize(lambda v: self._bisect_folded(1.0 - v))(r))

    def _bisect_folded(self, q: float, atol: float = 1e-12) -> float:
        if q == 0.0:
            return 0.0
        hi = self.scale
        while self.folded_cdf(hi) < q:
            hi *= 2.0
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            pm = self.folded_cdf(mid)
            if abs(pm - q) <= atol:
                return mid
            if pm < q:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def to_config(self) -> dict:
        return {"family": self.family, "scale": self.scale}


@dataclass(frozen=True)
class Gaussian(SymmetricDistribution):
    """N(0, scale^2)."""

    family: ClassVar[str] = "gaussian"

    def pdf(self, x):
        u = np.asarray(x, dtype=float) / self.scale
        return _out(np.exp(-0.5 * u * u) / (math.sqrt(2 * math.pi) * self.scale))

    def cdf(self, x):
        return _out(special.ndtr(np.asarray(x, dtype=float) / self.scale))

    def tail(self, T):
        T = _nonneg(T)
        return _out(special.erfc(T / (self.scale * _SQRT2)))

    def log_tail(self, T):
        T = _nonneg(T)
        return _out(math.log(2.0) + special.log_ndtr(-T / self.scale))

    def folded_cdf(self, T):
        T = _nonneg(T)
        return _out(special.erf(T / (self.scale * _SQRT2)))

    def inverse_folded_cdf(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0) or np.any(q >= 1) or np.any(np.isnan(q)):
            raise DomainError(f"probability must lie in [0, 1), got {q!r}")
        return _out(self.scale * _SQRT2 * special.erfinv(q))

    def inverse_tail(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r > 1):
            raise DomainError(f"tail probability must lie in (0, 1], got {r!r}")
        return _out(-self.scale * special.ndtri(0.5 * r))

    def truncated_second_moment(self, T):
        t = _nonneg(T) / self.scale
        phi = np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
        return _out(self.scale**2 * (2.0 * t * phi + special.erfc(t / _SQRT2)))

    @property
    def second_moment(self) -> float:
        return self.scale**2

    def sample(self, rng, size=None):
        return rng.normal(0.0, self.scale, size)


@dataclass(frozen=True)
class Laplace(SymmetricDistribution):
    """Laplace(0, b) with density exp(-|x|/b) / (2b); scale is b."""

    family: ClassVar[str] = "laplace"

    def pdf(self, x):
        b = self.scale
        return _out(np.exp(-np.abs(np.asarray(x, dtype=float)) / b) / (2 * b))

    def cdf(self, x):
        u = np.asarray(x, dtype=float) / self.scale
        half = 0.5 * np.exp(-np.abs(u))
        return _out(np.where(u < 0, half, 1.0 - half))

    def tail(self, T):
        return _out(np.exp(-_nonneg(T) / self.scale))

    def log_tail(self, T):
        return _out(-_nonneg(T) / self.scale)

    def inverse_folded_cdf(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0) or np.any(q >= 1) or np.any(np.isnan(q)):
            raise DomainError(f"probability must lie in [0, 1), got {q!r}")
        return _out(-self.scale * np.log1p(-q))

    def inverse_tail(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r > 1):
            raise DomainError(f"tail probability must lie in (0, 1], got {r!r}")
        return _out(-self.scale * np.log(r))

    def truncated_second_moment(self, T):
        T = _nonneg(T)
        b = self.scale
        return _out(np.exp(-T / b) * (T * T + 2 * b * T + 2 * b * b))

    @property
    def second_moment(self) -> float:
        return 2.0 * self.scale**2

    def sample(self, rng, size=None):
        return rng.laplace(0.0, self.scale, size)


FAMILIES: dict[str, type[SymmetricDistribution]] = {
    "gaussian": Gaussian,
    "laplace": Laplace,
}


def make_distribution(family: str, scale) -> SymmetricDistribution:
    """Build a law from its config form ``{family, scale}``."""
    try:
        cls = FAMILIES[str(family).strip().lower()]
    except KeyError:
        raise InvalidParameterError(
            f"unknown family {family!r}; expected one of {sorted(FAMILIES)}"
        ) from None
    if isinstance(scale, str):
        try:
            scale = float(scale)
        except ValueError:
            raise InvalidParameterError(f"scale must be a decimal number, got {scale!r}") from None
    return cls(scale)


def scale_for_variance(family: str, variance):
    """Scale parameter giving the requested second moment."""
    variance = np.asarray(variance, dtype=float)
    if family == "gaussian":
        return np.sqrt(variance)
    if family == "laplace":
        return np.sqrt(variance / 2.0)
    raise InvalidParameterError(f"unknown family {family!r}")
