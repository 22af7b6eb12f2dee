"""Command-line entry point.

On failure a single line ``error: <category>: <message>`` goes to stderr and
the exit code identifies the category (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import sys

from . import harness
from .distributions import make_distribution
from .errors import CollisionChannelError
from .graph import SensorGraph, erdos_renyi
from .harness import Table, build_config, read_config_file, write_output
from .lower_bound import centralized_lower_bound
from .threshold import DEFAULT_TOL, ThresholdProblem, bracket, optimal_threshold

EXIT_CODES = {
    "invalid-parameter": 3,
    "domain-error": 3,
    "configuration-error": 3,
    "numerical-failure": 4,
    "no-convergence": 4,
    "generation-failure": 5,
    "io-error": 6,
    "error": 1,
}


def _problem_args(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    p.add_argument("--n", type=int, required=defaults)
    p.add_argument("--k", type=int, required=defaults)
    p.add_argument("--family", default="gaussian" if defaults else None, choices=["gaussian", "laplace"])
    p.add_argument("--scale", default="1.0" if defaults else None, help="strictly positive decimal")


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; command-line options win")
    p.add_argument("--out", default="-", help="output CSV path (default stdout)")
    p.add_argument("--plot", help="optional SVG line chart")


def _sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", help="edge-list path or gen:<p_edge>")
    p.add_argument("--graph-seed", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--switch-round", type=int, help="fix the hybrid switching round instead of using --delta")
    p.add_argument("--assumed-family", choices=["gaussian", "laplace"])
    p.add_argument("--no-lag", dest="lagged", action="store_const", const=False,
                   help="evaluate the subgradient at the latest estimate")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collision-channel",
                                 description="Threshold design and local-communication schemes for the collision channel.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="optimal common threshold")
    _problem_args(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("lower-bound", help="centralised top-k benchmark")
    _problem_args(p)

    p = sub.add_parser("cost-curve", help="J(T) over a grid for several scales")
    _problem_args(p, defaults=False)
    p.add_argument("--scales", help="comma separated")
    p.add_argument("--grid-points", type=int)
    _experiment_args(p)

    p = sub.add_parser("capacity-sweep", help="J(T*) and J_L against k")
    _problem_args(p, defaults=False)
    p.add_argument("--k-values", help="comma separated; default 1..n")
    _experiment_args(p)

    p = sub.add_parser("switching-table", help="switching round R for several delta")
    p.add_argument("--d-max", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--deltas", help="comma separated")
    _experiment_args(p)

    p = sub.add_parser("graph", help="generate or inspect a communication graph")
    gsub = p.add_subparsers(dest="graph_command", required=True)
    g = gsub.add_parser("gen")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p-edge", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="-")
    g = gsub.add_parser("stats")
    g.add_argument("--in", dest="path", required=True)
    g.add_argument("--deltas", help="comma separated")

    p = sub.add_parser("simulate", help="sample paths of one scheme")
    p.add_argument("--scheme", choices=["consensus", "quantile", "hybrid"])
    _problem_args(p, defaults=False)
    _sim_args(p)
    _experiment_args(p)

    p = sub.add_parser("mismatch", help="quantile vs hybrid on the same paths")
    _problem_args(p, defaults=False)
    _sim_args(p)
    _experiment_args(p)
    return ap


def _emit_single(columns, row, header="# experiment=single") -> str:
    return Table(header, columns, [row]).to_csv()


def _config(args, experiment: str, defaults: dict, keys) -> harness.ExperimentConfig:
    file_layer = read_config_file(args.config) if getattr(args, "config", None) else {}
    cli_layer = {k: getattr(args, k, None) for k in keys}
    return build_config({"experiment": experiment}, defaults, file_layer, cli_layer,
                        {"experiment": experiment})


SIM_KEYS = ("n", "k", "family", "scale", "graph", "graph_seed", "rounds", "paths", "seed", "alpha",
            "tau", "delta", "p", "switch_round", "assumed_family", "lagged")


def _plot(table: Table, args, **kw) -> None:
    if getattr(args, "plot", None):
        harness.plot_table(table, args.plot, **kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except CollisionChannelError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error: io-error: {exc}", file=sys.stderr)
        return EXIT_CODES["io-error"]


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "threshold":
        dist = make_distribution(args.family, args.scale)
        prob = ThresholdProblem(args.n, args.k, dist)
        t_star, j_star = optimal_threshold(prob, args.tol)
        lo, hi = (0.0, 0.0) if prob.degenerate else bracket(prob)[:2]
        sys.stdout.write(_emit_single(["n", "k", "family", "scale", "T_star", "J_star", "lo", "hi"],
                                      [prob.n, prob.k, dist.family, dist.scale, t_star, j_star, lo, hi],
                                      "# experiment=threshold master_seed=none"))
        return 0
    if cmd == "lower-bound":
        prob = ThresholdProblem(args.n, args.k, make_distribution(args.family, args.scale))
        sys.stdout.write(_emit_single(["n", "k", "J_L"], [prob.n, prob.k, centralized_lower_bound(prob)],
                                      "# experiment=lower-bound master_seed=none"))
        return 0
    if cmd == "graph":
        return _graph(args)
    if cmd == "cost-curve":
        cfg = _config(args, "cost-curve", {}, ("n", "k", "family", "scale", "scales", "grid_points"))
        table = harness.cost_curve(cfg)
        write_output(table.to_csv(), args.out)
        _plot(table, args, x="T", ys=["J", "J_L"], group="scale", title=f"n={cfg.n}, k={cfg.k}")
        return 0
    if cmd == "capacity-sweep":
        cfg = _config(args, "capacity-sweep", {"n": 100}, ("n", "k", "family", "scale", "k_values"))
        table = harness.capacity_sweep(cfg)
        write_output(table.to_csv(), args.out)
        _plot(table, args, x="k", ys=["J_star", "J_L"], title=f"n={cfg.n}")
        return 0
    if cmd == "switching-table":
        cfg = _config(args, "switching-table", {}, ("d_max", "lambda2", "deltas"))
        write_output(harness.switching_table(cfg).to_csv(), args.out)
        return 0
    if cmd == "simulate":
        scheme = args.scheme
        file_layer = read_config_file(args.config) if args.config else {}
        scheme = scheme or file_layer.get("scheme") or "consensus"
        exp = f"{scheme}-paths"
        cfg = build_config({"experiment": exp}, file_layer, {k: getattr(args, k, None) for k in SIM_KEYS},
                           {"experiment": exp, "scheme": scheme})
        table, res = harness.run_simulation(cfg)
        write_output(table.to_csv(), args.out)
        info = table.summary
        print(f"# scheme={scheme} d_max={info['d_max']} lambda2={info['lambda2']:.4f} rho={info['rho']:.4f} "
              f"switch_round={info['switch_round']} clamped_paths={info['clamped_paths']}", file=sys.stderr)
        _plot(table, args, x="t", ys=["mean_cost", "p5", "p95"], logx=True, title=scheme)
        return 0
    if cmd == "mismatch":
        defaults = {"family": "laplace", "scale": 1.0, "delta": 1e-4, "paths": 100, "rounds": 10000}
        cfg = _config(args, "hybrid-vs-quantile", defaults, SIM_KEYS)
        table = harness.mismatch_experiment(cfg)
        write_output(table.to_csv(), args.out)
        s = table.summary
        print("# " + " ".join(f"{k}={v}" for k, v in s.items()), file=sys.stderr)
        _plot(table, args, x="t", ys=["mean_cost"], group="scheme", logx=True, title="quantile vs hybrid")
        return 0
    raise AssertionError(cmd)


def _graph(args) -> int:
    if args.graph_command == "gen":
        g = erdos_renyi(args.n, args.p_edge, args.seed)
        write_output(g.to_edge_list(), args.out)
        print(f"# n={g.n} edges={g.num_edges} d_max={g.d_max} lambda2={g.algebraic_connectivity:.6g} "
              f"rho={g.slem():.6g}", file=sys.stderr)
        return 0
    g = SensorGraph.read(args.path)
    deltas = [float(v) for v in args.deltas.split(",")] if args.deltas else list(harness.TABLE1_DELTAS)
    lines = [f"n={g.n}", f"edges={g.num_edges}", f"d_max={g.d_max}",
             f"lambda2={g.algebraic_connectivity!r}", f"lambda_max={g.laplacian_max_eigenvalue!r}",
             f"rho={g.slem()!r}", "delta,R"]
    try:
        lines += [f"{d!r},{r}" for d, r in harness.graph_switching_table(g, deltas)]
    except CollisionChannelError as exc:
        lines.append(f"# switching time undefined: {exc}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
