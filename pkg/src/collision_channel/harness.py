"""Experiment drivers producing deterministic CSV.

Every table starts with one ``#`` comment line carrying the experiment id,
a hash of the resolved configuration and the master seed, so reruns can be
compared byte for byte.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .distributions import make_distribution
from .errors import ConfigurationError
from .graph import SensorGraph, erdos_renyi, slem_from_connectivity, switching_time
from .lower_bound import centralized_lower_bound, order_stat_second_moments
from .protocols import QuantileParams, SimulationResult, sandwich_bounds, simulate
from .threshold import ThresholdProblem, bracket, cost, optimal_threshold

EXPERIMENTS = ("cost-curve", "capacity-sweep", "consensus-paths", "quantile-paths", "hybrid-paths",
               "hybrid-vs-quantile", "switching-table")
PERCENTILES = (5, 25, 50, 75, 95)
PERCENTILE_METHOD = "nearest-rank"
TABLE1_DELTAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


@dataclass
class ExperimentConfig:
    experiment: str = "cost-curve"
    n: int = 1000
    k: int = 100
    family: str = "gaussian"
    scale: float = 1.0
    scales: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    grid_points: int = 401
    k_values: list[int] | None = None
    graph: str = "gen:0.05"
    graph_seed: int | None = None
    scheme: str = "consensus"
    rounds: int = 1000
    paths: int = 100
    seed: int = 0
    alpha: float = 1000.0
    tau: float = 0.51
    p: float | None = None
    lagged: bool = True
    delta: float = 1e-4
    switch_round: int | None = None
    assumed_family: str = "gaussian"
    d_max: float = 81.0
    lambda2: float = 27.35
    deltas: list[float] = field(default_factory=lambda: list(TABLE1_DELTAS))
    tol: float = 1e-9

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def header(self) -> str:
        return (f"# experiment={self.experiment} config_hash={self.digest()} master_seed={self.seed} "
                f"percentiles={PERCENTILE_METHOD}")

    def problem(self) -> ThresholdProblem:
        return ThresholdProblem(self.n, self.k, make_distribution(self.family, self.scale))

    def quantile_params(self) -> QuantileParams:
        if self.p is None:
            return QuantileParams.midpoint(self.n, self.k, alpha=self.alpha, tau=self.tau, lagged=self.lagged)
        return QuantileParams(self.p, self.alpha, self.tau, self.lagged)

    def load_graph(self) -> SensorGraph:
        return resolve_graph(self.graph, self.n, self.seed if self.graph_seed is None else self.graph_seed)


_LIST_FIELDS = {"scales": float, "k_values": int, "deltas": float}


def _coerce(name: str, value: Any):
    if value is None:
        return None
    if name in _LIST_FIELDS:
        conv = _LIST_FIELDS[name]
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return [conv(v) for v in value]
    typ = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    if not isinstance(value, str):
        return value
    v = value.strip()
    if v.lower() in ("none", ""):
        return None
    if "bool" in typ:
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{name}: expected a boolean, got {value!r}")
    if typ.startswith("int"):
        return int(v)
    if typ.startswith("float"):
        return float(v)
    return v


def read_config_file(path) -> dict[str, Any]:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys allowed."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[config]\n" + Path(path).read_text())
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return {key.replace("-", "_"): val for key, val in parser["config"].items()}


def build_config(*layers: dict[str, Any]) -> ExperimentConfig:
    """Merge layers left to right (later wins), skipping ``None`` values."""
    names = {f.name for f in fields(ExperimentConfig)}
    merged: dict[str, Any] = {}
    for layer in layers:
        for key, val in layer.items():
            key = key.replace("-", "_")
            if key not in names:
                raise ConfigurationError(f"unknown config key {key!r}")
            if val is not None:
                try:
                    merged[key] = _coerce(key, val)
                except ValueError as exc:
                    raise ConfigurationError(f"{key}: {exc}") from None
    cfg = ExperimentConfig(**merged)
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}")
    return cfg


def resolve_graph(source: str, n: int, seed: int) -> SensorGraph:
    """``gen:<p_edge>`` samples G(n, p_edge); anything else is an edge-list path."""
    if source.startswith("gen:"):
        try:
            p_edge = float(source[4:])
        except ValueError:
            raise ConfigurationError(f"bad graph source {source!r}") from None
        return erdos_renyi(n, p_edge, seed)
    g = SensorGraph.read(source)
    if g.n != n:
        raise ConfigurationError(f"graph file {source} has {g.n} nodes, expected n={n}")
    return g


# -- CSV -----------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


@dataclass
class Table:
    header_line: str
    columns: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any] = field(default_factory=dict)
    results: dict[str, SimulationResult] = field(default_factory=dict)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(self.header_line + "\n")
        out.write(",".join(self.columns) + "\n")
        for row in self.rows:
            out.write(",".join(fmt(v) for v in row) + "\n")
        return out.getvalue()

    def column(self, name: str) -> list[Any]:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


# -- experiments ---------------------------------------------------------------

def cost_curve(cfg: ExperimentConfig) -> Table:
    """J(T) on a grid over [0, 2 hi] for each scale, with J_L and the optimum."""
    rows = []
    optima = {}
    for s in cfg.scales:
        prob = ThresholdProblem(cfg.n, cfg.k, make_distribution(cfg.family, s))
        j_low = centralized_lower_bound(prob)
        if prob.degenerate:
            grid = np.linspace(0.0, 3.0 * s, cfg.grid_points)
            t_star, j_star = 0.0, 0.0
        else:
            hi = bracket(prob).hi
            grid = np.linspace(0.0, 2.0 * hi, cfg.grid_points)
            t_star, j_star = optimal_threshold(prob, cfg.tol)
        block = [[s, T, J, j_low, 0] for T, J in zip(grid, cost(prob, grid))]
        # keep T increasing within each scale so the rows plot as one curve
        pos = int(np.searchsorted(grid, t_star, side="right"))
        block.insert(pos, [s, t_star, j_star, j_low, 1])
        rows.extend(block)
        optima[s] = (t_star, j_star, j_low)
    return Table(cfg.header(), ["scale", "T", "J", "J_L", "is_optimum"], rows, {"optima": optima})


def capacity_sweep(cfg: ExperimentConfig) -> Table:
    ks = cfg.k_values or list(range(1, cfg.n + 1))
    dist = make_distribution(cfg.family, cfg.scale)
    n = cfg.n
    for k in ks:
        ThresholdProblem(n, k, dist)
    # J_L for every k from one pass over the order-statistic moments
    moments = order_stat_second_moments(n, np.arange(1, n + 1), dist)
    tail = np.concatenate([np.cumsum(moments[::-1])[::-1], [0.0]]) / n
    rows = []
    for k in ks:
        t_star, j_star = optimal_threshold(ThresholdProblem(n, k, dist), cfg.tol)
        j_low = float(tail[k])
        rows.append([k, t_star, j_star, j_low, j_star - j_low])
    return Table(cfg.header(), ["k", "T_star", "J_star", "J_L", "gap"], rows)


def switching_table(cfg: ExperimentConfig) -> Table:
    rho = slem_from_connectivity(cfg.d_max, cfg.lambda2)
    rows = [[d, switching_time(rho, d)] for d in cfg.deltas]
    return Table(cfg.header(), ["delta", "R"], rows, {"rho": rho})


def graph_switching_table(g: SensorGraph, deltas=TABLE1_DELTAS) -> list[tuple[float, int]]:
    rho = g.slem()
    return [(d, switching_time(rho, d)) for d in deltas]


def nearest_rank(values: np.ndarray, q, axis: int = -1) -> np.ndarray:
    """Nearest-rank percentile: the ceil(q/100 * N)-th smallest value."""
    return np.percentile(values, q, axis=axis, method="inverted_cdf")


def aggregate(res: SimulationResult) -> list[list[Any]]:
    """Per-round summary across paths."""
    pct = nearest_rank(res.cost, PERCENTILES, axis=1)
    mean_cost = res.cost.mean(axis=1)
    mean_tx = res.transmitters.mean(axis=1)
    coll = res.collided.mean(axis=1)
    return [[t, mean_cost[t], *pct[:, t], mean_tx[t], coll[t]] for t in range(res.cost.shape[0])]


SIM_COLUMNS = ["t", "mean_cost", "p5", "p25", "p50", "p75", "p95", "mean_transmitters", "collision_rate"]


def run_simulation(cfg: ExperimentConfig, graph: SensorGraph | None = None) -> tuple[Table, SimulationResult]:
    g = graph if graph is not None else cfg.load_graph()
    res = simulate(cfg.scheme, cfg.problem(), g, cfg.rounds, cfg.paths, cfg.seed, cfg.quantile_params(),
                   cfg.delta, cfg.assumed_family, switch_round=cfg.switch_round)
    summary = {"switch_round": res.switch_round, "clamped_paths": int(res.clamped_paths.sum()),
               "d_max": g.d_max, "lambda2": g.algebraic_connectivity, "rho": g.slem()}
    return Table(cfg.header(), SIM_COLUMNS, aggregate(res), summary), res


def sandwich_entry(res: SimulationResult, k: int) -> int | None:
    """First round at which the path-averaged cost is at most the averaged upper bound.

    Costs can never fall below the lower bound (no scheme beats sending the k
    largest), so this is entry into the averaged sandwich.
    """
    _, upper = sandwich_bounds(res.x, k)
    idx = np.flatnonzero(res.cost.mean(axis=1) <= upper.mean() * (1 + 1e-12))
    return int(idx[0]) if idx.size else None


def band_entry(res: SimulationResult, k: int, factor: float) -> int | None:
    """First round with path-averaged cost within ``factor`` of the averaged upper bound."""
    _, upper = sandwich_bounds(res.x, k)
    idx = np.flatnonzero(res.cost.mean(axis=1) <= factor * upper.mean())
    return int(idx[0]) if idx.size else None


def mismatch_experiment(cfg: ExperimentConfig, graph: SensorGraph | None = None) -> Table:
    """Quantile vs hybrid scheme on the same paths; data law is ``cfg.family``."""
    g = graph if graph is not None else cfg.load_graph()
    prob = cfg.problem()
    params = cfg.quantile_params()
    results = {}
    for scheme in ("quantile", "hybrid"):
        results[scheme] = simulate(scheme, prob, g, cfg.rounds, cfg.paths, cfg.seed, params, cfg.delta,
                                   cfg.assumed_family, switch_round=cfg.switch_round)
    lower, upper = sandwich_bounds(results["quantile"].x, cfg.k)
    rows = []
    summary: dict[str, Any] = {"switch_round": results["hybrid"].switch_round,
                               "sandwich_lower_mean": float(lower.mean()),
                               "sandwich_upper_mean": float(upper.mean())}
    for scheme, res in results.items():
        inside = (res.cost <= upper * (1 + 1e-12)).mean(axis=1)
        for row, frac in zip(aggregate(res), inside):
            rows.append([scheme, *row, frac])
        summary[f"{scheme}_entry"] = sandwich_entry(res, cfg.k)
        summary[f"{scheme}_band10_entry"] = band_entry(res, cfg.k, 1.1)
    q, h = summary["quantile_entry"], summary["hybrid_entry"]
    summary["speedup"] = (q / max(h, 1)) if (q is not None and h is not None) else None
    qb, hb = summary["quantile_band10_entry"], summary["hybrid_band10_entry"]
    summary["band10_speedup"] = (qb / max(hb, 1)) if (qb is not None and hb is not None) else None
    return Table(cfg.header(), ["scheme", *SIM_COLUMNS, "sandwich_fraction"], rows, summary, results)


def run_experiment(cfg: ExperimentConfig) -> Table:
    exp = cfg.experiment
    if exp == "cost-curve":
        return cost_curve(cfg)
    if exp == "capacity-sweep":
        return capacity_sweep(cfg)
    if exp == "switching-table":
        return switching_table(cfg)
    if exp == "hybrid-vs-quantile":
        return mismatch_experiment(cfg)
    scheme = exp.removesuffix("-paths")
    if cfg.scheme != scheme:
        cfg = ExperimentConfig(**{**asdict(cfg), "scheme": scheme})
    return run_simulation(cfg)[0]


def write_output(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- plotting ------------------------------------------------------------------

def plot_table(table: Table, path, x: str, ys: list[str], group: str | None = None,
               logx: bool = False, title: str = "") -> None:
    """Simple line chart written as SVG (deterministic: no timestamps, fixed ids)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "collision-channel"
    fig, ax = plt.subplots(figsize=(6, 4))
    if group is None:
        groups = {None: table.rows}
    else:
        gi = table.columns.index(group)
        groups = {}
        for r in table.rows:
            groups.setdefault(r[gi], []).append(r)
    xi = table.columns.index(x)
    for key, rows in groups.items():
        for y in ys:
            yi = table.columns.index(y)
            label = y if key is None else f"{group}={key} {y}"
            xs = [r[xi] for r in rows]
            if logx:
                xs = [max(v, 1) for v in xs]
            ax.plot(xs, [r[yi] for r in rows], label=label, lw=1)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(x)
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
