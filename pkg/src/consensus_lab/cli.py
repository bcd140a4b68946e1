"""Command-line interface: ``consensus-lab <subcommand>``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys

import numpy as np

from . import checks
from .diagnostics import (
    Check,
    Gamma_of_diameter,
    bound_curve,
    gamma,
    gamma_pivot_lower_bound,
    pair_bound_curve,
    pivot_lemma_scan,
)
from .dynamics import WeightMatrix, diameter, transition_matrix
from .engine import run, run_ensemble
from .graph import EdgeConfig
from .io import (
    ConfigError,
    ReportDocument,
    config_echo,
    default_seed,
    emit_trajectories,
    emit_trajectory,
    load_config_document,
    parse_config,
)
from .noise import ConfidenceFunction

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="master seed (falls back to $CONSENSUS_LAB_SEED, then 0)")
    p.add_argument("--out", default=d, help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), default=argparse.SUPPRESS if suppress else "csv")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="JSON config file or inline JSON")
    p.add_argument("--n", type=int, help="agent count (inferred from --x0 when given)")
    p.add_argument("--kernel", help="confidence function, e.g. linear:0.5 or threshold:0.5,0")
    p.add_argument("--x0", help="comma-separated initial beliefs")
    p.add_argument("--omega0", choices=("all_open", "diagonal", "sample"))
    p.add_argument("--max-steps", type=int)
    p.add_argument("--tol", type=float, help="consensus tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="consensus-lab", description="Random-channel opinion dynamics and certificates.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="simulate one trajectory")
    _run_flags(p)
    _global_flags(p, suppress=True)

    p = sub.add_parser("ensemble", help="simulate independent trajectories")
    _run_flags(p)
    p.add_argument("--trajectories", type=int, required=True)
    p.add_argument("--summary", help="write a JSON report with mean W, bound and histograms here")
    _global_flags(p, suppress=True)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--kernel", default="linear:0.5")
    p.add_argument("--inject-violation", help=argparse.SUPPRESS)
    _global_flags(p, suppress=True)

    p = sub.add_parser("scan-pivot-lemma", help="compare gamma > 0 with the pivot criterion on every configuration")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--weights", choices=("uniform", "random"), default="uniform")
    _global_flags(p, suppress=True)

    p = sub.add_parser("gamma", help="certificate of one edge configuration")
    p.add_argument("--omega", required=True, help="row-major 0/1 matrix, rows optionally separated by '/'")
    _global_flags(p, suppress=True)

    p = sub.add_parser("bound", help="geometric bound curve")
    p.add_argument("--w0", type=float, required=True)
    p.add_argument("--gamma0", type=float, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--pair", action="store_true", help="pair-chain curve (exponent 2t)")
    _global_flags(p, suppress=True)
    return parser


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def _seed(args) -> int | None:
    return getattr(args, "seed", None)


def _config_from_args(args):
    doc = load_config_document(args.config) if args.config else {}
    if args.kernel:
        doc["kernel"] = ConfidenceFunction.parse(args.kernel).to_dict()
    if args.x0:
        doc["X0"] = [float(x) for x in args.x0.split(",")]
        doc["n"] = len(doc["X0"])
    if args.n is not None:
        doc["n"] = args.n
    for flag, key in (("omega0", "omega0"), ("max_steps", "max_steps"), ("tol", "consensus_tol")):
        if getattr(args, flag) is not None:
            doc[key] = getattr(args, flag)
    return parse_config(doc, seed=_seed(args))


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    rec = run(cfg)
    with _sink(args.out) as f:
        emit_trajectory(rec, f, args.format)
    return EXIT_OK


def _cmd_ensemble(args) -> int:
    if args.trajectories < 1:
        raise ConfigError("trajectories: must be >= 1")
    cfg = _config_from_args(args)
    ens = run_ensemble(cfg, args.trajectories, keep_records=True)
    with _sink(args.out) as f:
        emit_trajectories(ens.records, f, args.format)
    if args.summary:
        W0 = diameter(cfg.initial_beliefs())
        G0 = Gamma_of_diameter(W0, cfg.weight_matrix(), cfg.edge_kernel())
        counts, edges = ens.final_value_histogram()
        tables = {
            "mean_W": {
                "t": np.arange(ens.W.shape[1]),
                "mean_W": ens.mean_W,
                "var_W": ens.var_W,
                "bound": bound_curve(W0, G0, ens.W.shape[1] - 1).values,
            },
            "consensus_time_histogram": ens.consensus_time_histogram(),
            "final_value_histogram": {"counts": counts, "edges": edges},
        }
        with open(args.summary, "w") as f:
            f.write(ReportDocument(config_echo(cfg), [], tables).to_json() + "\n")
    return EXIT_OK


def _cmd_verify(args) -> int:
    kernel = ConfidenceFunction.parse(args.kernel)
    seed = _seed(args)
    seed = default_seed() if seed is None else seed
    if args.n < 2:
        raise ConfigError("n: verify needs n >= 2")
    results = checks.run_suites(args.n, kernel, seed=seed, inject=args.inject_violation)
    for c in results:
        print(f"{c.status.upper():7s} {c.name} (margin {c.margin:.3g})", file=sys.stderr if args.out is None else sys.stdout)
    doc = ReportDocument({"n": args.n, "kernel": kernel.to_dict(), "seed": seed}, results)
    with _sink(args.out) as f:
        f.write(doc.to_json() + "\n")
    return EXIT_OK if doc.passed else EXIT_FAIL


def _cmd_scan(args) -> int:
    r = None
    if args.weights == "random":
        seed = _seed(args)
        rng = np.random.default_rng(default_seed() if seed is None else seed)
        n = args.n
        r = WeightMatrix.from_dense(np.where(np.eye(n, dtype=bool), 1.0, rng.uniform(0.05, 1.0, (n, n))))
    scan = pivot_lemma_scan(args.n, r)
    ok = not scan.forward_violations and not scan.cin_mismatches
    checks_ = [
        Check("pivot_forward", "pass" if not scan.forward_violations else "fail", -float(len(scan.forward_violations))),
        Check("common_in_neighbor", "pass" if not scan.cin_mismatches else "fail", -float(len(scan.cin_mismatches))),
    ]
    tables = {
        "configurations": scan.total,
        "converse_discrepancies": [
            {"omega": cfg.format(), "gamma": g, "pivots": sorted(p)} for cfg, g, p in scan.discrepancies
        ],
    }
    with _sink(args.out) as f:
        f.write(ReportDocument({"n": args.n, "weights": args.weights}, checks_, tables).to_json() + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_gamma(args) -> int:
    try:
        omega = EdgeConfig.parse(args.omega)
    except ValueError as e:
        raise ConfigError(f"omega: {e}") from None
    rep = gamma(omega)
    out = {
        "omega": omega.format(),
        "gamma": rep.gamma,
        "argmin_pair": rep.argmin_pair,
        "pivots": sorted(rep.pivot_set),
        "common_in_neighbor_ok": rep.common_in_neighbor_ok,
        "pivot_lower_bound": gamma_pivot_lower_bound(omega),
        "transition_matrix": transition_matrix(omega).tolist(),
    }
    if rep.single_agent:
        out["flag"] = "single agent: gamma set to 1 by convention"
    with _sink(args.out) as f:
        f.write(json.dumps(out) + "\n")
    return EXIT_OK


def _cmd_bound(args) -> int:
    try:
        curve = (pair_bound_curve if args.pair else bound_curve)(args.w0, args.gamma0, args.horizon)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    with _sink(args.out) as f:
        if args.format == "csv":
            f.write("t,bound\n")
            for t, b in enumerate(curve.values):
                f.write(f"{t},{float(b)!r}\n")
        else:
            for t, b in enumerate(curve.values):
                f.write(json.dumps({"t": t, "bound": float(b)}) + "\n")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "ensemble": _cmd_ensemble,
    "verify": _cmd_verify,
    "scan-pivot-lemma": _cmd_scan,
    "gamma": _cmd_gamma,
    "bound": _cmd_bound,
}


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as e:
        print(f"consensus-lab: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> int:
    return cli_dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
