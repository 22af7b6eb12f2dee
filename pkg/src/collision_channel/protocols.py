"""Round-by-round simulation of the local-communication schemes.

Three schemes decide, at every round ``t``, which sensors would transmit:

consensus
    Average consensus on ``y_i = x_i^2`` estimates the variance; each sensor
    then uses the optimal threshold for its assumed law with that variance.
quantile
    A distributed subgradient iteration drives every ``w_i`` to the k-th
    largest magnitude, which is then used as the threshold.
hybrid
    Consensus for ``t < R``, then the quantile iteration seeded with the
    consensus thresholds at ``t = R``.

Sample paths are independent; they are stacked as columns of ``(n, paths)``
arrays and advanced together. Each path's measurements come from its own
stream spawned from the master seed, so a path's result does not depend on
how many other paths run beside it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .distributions import scale_for_variance
from .errors import ConfigurationError, InvalidParameterError, NoConvergenceError
from .graph import SensorGraph
from .threshold import ThresholdProblem, unit_optimal_threshold

SCHEMES = ("consensus", "quantile", "hybrid")
VARIANCE_FLOOR = 1e-300


@dataclass(frozen=True)
class TraceRecord:
    t: int
    cost: float
    num_transmitters: int
    collided: bool


@dataclass(frozen=True)
class QuantileParams:
    """Target level ``p``, step size ``alpha / t**tau``.

    With ``lagged=True`` the subgradient at round t is evaluated at the
    estimate from two rounds back while the step is taken from the latest
    one; ``lagged=False`` gives the textbook form where both use the latest.
    """

    p: float
    alpha: float = 1000.0
    tau: float = 0.51
    lagged: bool = True

    @classmethod
    def midpoint(cls, n: int, k: int, **kw) -> "QuantileParams":
        return cls(p=(n - k + 0.5) / n, **kw)

    def validate(self, n: int, k: int) -> None:
        lo, hi = (n - k) / n, (n - k + 1) / n
        if not lo < self.p < hi:
            raise InvalidParameterError(f"p={self.p!r} must lie strictly inside ({lo}, {hi}) so that it selects the k-th largest")
        if not self.alpha > 0:
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha!r}")
        if not 0.5 < self.tau <= 1:
            raise InvalidParameterError(f"tau must lie in (0.5, 1], got {self.tau!r}")

    def step(self, t: int) -> float:
        return self.alpha / t**self.tau


@dataclass
class NetworkState:
    """One path's measurements and per-sensor learned scalar at round ``t``.

    ``values`` holds variance estimates for consensus and threshold estimates
    for the quantile scheme; ``previous`` is the quantile estimate one round
    earlier (used by the lagged subgradient).
    """

    x: np.ndarray
    values: np.ndarray
    t: int = 0
    previous: np.ndarray | None = None

    @property
    def z(self) -> np.ndarray:
        return np.abs(self.x)

    @classmethod
    def for_consensus(cls, x) -> "NetworkState":
        x = np.asarray(x, dtype=float)
        return cls(x=x, values=x * x)

    @classmethod
    def for_quantile(cls, x) -> "NetworkState":
        x = np.asarray(x, dtype=float)
        z = np.abs(x)
        return cls(x=x, values=z.copy(), previous=z.copy())


# -- scoring -------------------------------------------------------------------

def score(x, thresholds, k: int):
    """Instantaneous cost, transmitter count and collision flag per column.

    ``x`` and ``thresholds`` are ``(n,)`` or ``(n, paths)``.
    """
    x = np.asarray(x, dtype=float)
    th = np.asarray(thresholds, dtype=float)
    if np.any(th < 0):
        raise InvalidParameterError("thresholds must be non-negative")
    n = x.shape[0]
    x2 = x * x
    transmit = np.abs(x) >= th
    count = transmit.sum(axis=0)
    total = x2.sum(axis=0) / n
    silent = np.where(transmit, 0.0, x2).sum(axis=0) / n
    collided = count > k
    return np.where(collided, total, silent), count, collided


def decide_and_score(x, thresholds, k: int, t: int = 0) -> TraceRecord:
    """Transmit iff |x_i| >= T_i; cost of the silent ones, or of all on collision."""
    c, m, col = score(np.asarray(x, dtype=float), thresholds, k)
    return TraceRecord(t, float(c), int(m), bool(col))


# -- single-path rounds --------------------------------------------------------

def _mixing(g, kind: str):
    if isinstance(g, SensorGraph):
        return g.consensus_matrix() if kind == "consensus" else g.metropolis_weights()
    return g


def consensus_round(state: NetworkState, g) -> NetworkState:
    """y <- W y with W = I - L/d_max. ``g`` is a graph or a ready matrix."""
    W = _mixing(g, "consensus")
    return replace(state, values=W @ state.values, t=state.t + 1)


def consensus_thresholds(y, n: int, k: int, family: str = "gaussian"):
    """Per-sensor optimal thresholds assuming X has variance ``y_i``.

    Uses scale equivariance, T_i = scale(y_i) * T_unit, so one bisection per
    (n, k, family). Returns ``(thresholds, clamped)``, where ``clamped`` marks
    variance estimates that had to be floored at ``VARIANCE_FLOOR``.
    """
    y = np.asarray(y, dtype=float)
    clamped = ~(y >= VARIANCE_FLOOR)
    y = np.where(clamped, VARIANCE_FLOOR, y)
    return scale_for_variance(family, y) * unit_optimal_threshold(n, k, family), clamped


def consensus_threshold_update(state: NetworkState, n: int, k: int, family: str = "gaussian") -> np.ndarray:
    return consensus_thresholds(state.values, n, k, family)[0]


def _subgradient(z, w, p: float, n: int):
    return np.where(z > w, -p / n, np.where(z < w, (1.0 - p) / n, 0.0))


def quantile_round(state: NetworkState, C, params: QuantileParams) -> NetworkState:
    """One distributed subgradient step followed by Metropolis mixing."""
    C = _mixing(C, "quantile")
    z = state.z
    n = z.shape[0]
    t = state.t + 1
    w = state.values
    w_sub = state.previous if (params.lagged and state.previous is not None) else w
    psi = w - params.step(t) * _subgradient(z, w_sub, params.p, n)
    return NetworkState(x=state.x, values=C @ psi, t=t, previous=w)


# -- multi-path simulation -----------------------------------------------------

def path_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for sample path ``index`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def draw_measurements(prob: ThresholdProblem, paths: int, master_seed: int, first_path: int = 0) -> np.ndarray:
    cols = [prob.dist.sample(path_rng(master_seed, first_path + i), prob.n) for i in range(paths)]
    return np.column_stack(cols) if cols else np.zeros((prob.n, 0))


@dataclass
class SimulationResult:
    scheme: str
    cost: np.ndarray          # (rounds + 1, paths)
    transmitters: np.ndarray  # (rounds + 1, paths)
    collided: np.ndarray      # (rounds + 1, paths)
    x: np.ndarray             # (n, paths)
    switch_round: int | None = None
    clamped_paths: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    final_values: np.ndarray | None = None

    @property
    def rounds(self) -> int:
        return self.cost.shape[0] - 1

    def records(self, path: int = 0) -> list[TraceRecord]:
        return [TraceRecord(t, float(self.cost[t, path]), int(self.transmitters[t, path]), bool(self.collided[t, path]))
                for t in range(self.cost.shape[0])]


def simulate(scheme: str, prob: ThresholdProblem, graph: SensorGraph, rounds: int, paths: int,
             seed: int, params: QuantileParams | None = None, delta: float = 1e-4,
             assumed_family: str = "gaussian", x: np.ndarray | None = None,
             keep_values: bool = False, switch_round: int | None = None) -> SimulationResult:
    """Run ``paths`` independent sample paths for rounds ``t = 0..rounds``.

    Each path draws one measurement vector and keeps it for the whole run.
    ``x`` may be supplied directly as an ``(n, paths)`` array, in which case
    ``seed`` is not used. ``switch_round`` fixes the hybrid switching round
    instead of deriving it from ``delta`` and the graph spectrum.
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    n, k = prob.n, prob.k
    if graph.n != n:
        raise ConfigurationError(f"graph has {graph.n} nodes but the problem has n={n}")
    if int(rounds) != rounds or rounds < 0:
        raise ConfigurationError(f"rounds must be a non-negative integer, got {rounds!r}")
    if params is None:
        params = QuantileParams.midpoint(n, k)
    params.validate(n, k)

    switch = None
    if scheme == "hybrid" and switch_round is not None:
        if int(switch_round) != switch_round or switch_round < 1:
            raise ConfigurationError(f"switch_round must be an integer >= 1, got {switch_round!r}")
        switch = int(switch_round)
    elif scheme == "hybrid":
        try:
            switch = graph.switching_time(delta)
        except NoConvergenceError as exc:
            raise ConfigurationError(f"hybrid scheme needs a mixing graph: {exc}") from None

    if x is None:
        x = draw_measurements(prob, paths, seed)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != n:
        raise ConfigurationError(f"measurement array has {x.shape[0]} rows, expected {n}")
    n_paths = x.shape[1]
    z = np.abs(x)

    cost = np.empty((rounds + 1, n_paths))
    count = np.empty((rounds + 1, n_paths), dtype=np.int64)
    coll = np.empty((rounds + 1, n_paths), dtype=bool)
    clamped = np.zeros(n_paths, dtype=bool)

    W = graph.consensus_matrix() if scheme != "quantile" else None
    C = graph.metropolis_weights() if scheme != "consensus" else None

    y = x * x
    w = w_prev = None
    if scheme == "quantile":
        w, w_prev = z.copy(), z.copy()
    consensus_until = {"consensus": rounds + 1, "quantile": 0, "hybrid": switch}[scheme]

    for t in range(rounds + 1):
        if t < consensus_until:
            th, cl = consensus_thresholds(y, n, k, assumed_family)
            clamped |= cl.any(axis=0)
            cost[t], count[t], coll[t] = score(x, th, k)
            if t < rounds:
                y = W @ y
            continue
        if t == consensus_until and scheme == "hybrid":
            th, cl = consensus_thresholds(y, n, k, assumed_family)
            clamped |= cl.any(axis=0)
            w, w_prev = th, th.copy()
        # a negative estimate makes the sensor transmit, same as a zero threshold
        cost[t], count[t], coll[t] = score(x, np.maximum(w, 0.0), k)
        if t < rounds:
            w_sub = w_prev if params.lagged else w
            psi = w - params.step(t + 1) * _subgradient(z, w_sub, params.p, n)
            w_prev = w
            w = C @ psi

    final = None
    if keep_values:
        final = y if scheme == "consensus" or (scheme == "hybrid" and rounds < switch) else w
    return SimulationResult(scheme, cost, count, coll, x, switch, clamped, final)


def run_scheme(scheme: str, prob: ThresholdProblem, g: SensorGraph, params: QuantileParams | None,
               rounds: int, seed: int, delta: float = 1e-4, assumed_family: str = "gaussian",
               path_index: int = 0, switch_round: int | None = None) -> list[TraceRecord]:
    """Trace of a single sample path (path ``path_index`` of ``seed``)."""
    x = draw_measurements(prob, 1, seed, first_path=path_index)
    res = simulate(scheme, prob, g, rounds, 1, seed, params, delta, assumed_family, x=x,
                   switch_round=switch_round)
    return res.records(0)


def sandwich_bounds(x, k: int):
    """Per-path bounds on the cost once thresholds sit between z_(k+1) and z_(k-1).

    Returns ``(lower, upper)`` = ``((1/n) sum_{i>k} z_(i)^2, (1/n) sum_{i>=k} z_(i)^2)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    z2 = np.sort(x * x, axis=0)[::-1]
    lower = z2[k:].sum(axis=0) / n
    upper = z2[k - 1:].sum(axis=0) / n
    return lower, upper


def kth_largest(x, k: int):
    """z_(k) per column, the k-th largest magnitude."""
    z = np.sort(np.abs(np.asarray(x, dtype=float)), axis=0)[::-1]
    return z[k - 1]


def entry_round(cost_path, lower: float, upper: float, rtol: float = 1e-12) -> int | None:
    """First round from which every later cost lies in ``[lower, upper]``."""
    c = np.asarray(cost_path)
    slack = rtol * max(abs(upper), 1.0)
    inside = (c >= lower - slack) & (c <= upper + slack)
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    return 0 if outside.size == 0 else int(outside[-1] + 1)
