"""Command-line front end: ``caisens sens|simulate|verify|power``.

Every run writes ``manifest.json`` (configuration, seed, version) into the
output directory. Exit codes: 0 success, 1 input error, 2 infeasible moment
LP, 3 verification failure.
"""

import argparse
import csv
import datetime
import json
import logging
import os
import sys

import numpy as np

from caisens import __version__
from caisens.dataset import DataError, load_csv, one_hot_expand
from caisens.propensity import RankDeficientError, SeparationError, balance_report, SMD_WARNING
from caisens.sensitivity import (
    DEFAULT_XI_GRID,
    InfeasibleLPError,
    SensitivityConfig,
    default_threads,
    prepare,
    sensitivity_curve,
)

logger = logging.getLogger("caisens")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3
DEFAULT_SEED = 1
LALONDE_COVARIATES = "age,educ,black,hispan,married,nodegree,re74,re75"
DEFAULT_DESIGNS = "0:0,4000:0,0:4000,4000:-4000"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 is reserved here
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _name_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _designs(text):
    out = []
    for item in text.split(","):
        parts = item.split(":")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"design {item!r} is not of the form tau:gamma")
        try:
            out.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise argparse.ArgumentTypeError(f"design {item!r} is not numeric")
    if not out:
        raise argparse.ArgumentTypeError("empty design grid")
    return out


def build_parser():
    shared = Parser(add_help=False)
    shared.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    shared.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    shared.add_argument("--out", default="caisens-out", help="output directory")
    shared.add_argument("--format", choices=("json", "csv", "both"), default="csv", dest="fmt")
    shared.add_argument("--config", default=None, help="key=value file; flags override it")
    shared.add_argument("--quiet", action="store_true", help="only print warnings and errors")

    parser = Parser(prog="caisens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"caisens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("sens", parents=[shared], help="P-value bounds over a grid of xi")
    p.add_argument("--data", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--covariates", type=_name_list, default=[])
    p.add_argument("--fixed-effects", type=_name_list, default=[], help="categorical columns to one-hot expand")
    p.add_argument("--strata", type=int, default=6)
    p.add_argument("--xi", type=_float_list, default=list(DEFAULT_XI_GRID))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tail", choices=("right", "left", "two-sided"), default="right")
    p.add_argument("--b-base", type=int, default=50000)
    p.add_argument("--b-inner", type=int, default=2500)
    p.add_argument("--b-final", type=int, default=30000)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--table-draws", type=int, default=2000, help="sampled subsets per treated count")

    p = sub.add_parser("simulate", parents=[shared], help="IPW bias under a common assignment shock")
    p.add_argument("--rho", type=_float_list, default=[0.0, 0.5, 1.0, 1.5])
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--reps", type=int, default=1000)

    p = sub.add_parser("verify", parents=[shared], help="run the oracle verification suites")
    p.add_argument("--suite", type=_name_list, default=None, help="comma list (default: all)")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--inject-fault", type=_name_list, default=[], help=argparse.SUPPRESS)

    p = sub.add_parser("power", parents=[shared], help="size and power of the Fisher test")
    p.add_argument("--designs", type=_designs, default=_designs(DEFAULT_DESIGNS), help="tau:gamma,...")
    p.add_argument("--reps", type=int, default=300)
    p.add_argument("--b", type=int, default=20000, dest="B", help="simulated assignments per test")
    p.add_argument("--strata", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tail", choices=("right", "left", "two-sided"), default="two-sided")
    p.add_argument("--data", default=None, help="LaLonde-schema CSV (default: bundled synthetic stand-in)")
    p.add_argument("--outcome", default="re78")
    p.add_argument("--treatment", default="treat")
    p.add_argument("--covariates", type=_name_list, default=_name_list(LALONDE_COVARIATES))
    return parser, sub


def read_config(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, value = (x.strip() for x in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = value
    return values


def parse_args(argv):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        if not os.path.exists(args.config):
            raise DataError(f"config file not found: {args.config}")
        file_values = read_config(args.config)
        sp = sub.choices[args.command]
        dests = {a.dest: a for a in sp._actions}
        aliases = {"format": "fmt", "b": "B"}
        defaults = {}
        for key, value in file_values.items():
            dest = aliases.get(key, key)
            if dest not in dests:
                raise DataError(f"unknown config key {key!r} for {args.command}")
            action = dests[dest]
            defaults[dest] = action.type(value) if action.type else value
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_rows(directory, stem, rows, fmt, columns=None):
    """Long-format table as CSV and/or JSON (array of row objects)."""
    columns = columns or (list(rows[0]) if rows else [])
    paths = []
    if fmt in ("csv", "both"):
        path = os.path.join(directory, stem + ".csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r.get(c)) for c in columns])
        paths.append(path)
    if fmt in ("json", "both"):
        path = os.path.join(directory, stem + ".json")
        write_json(path, [{c: r.get(c) for c in columns} for r in rows])
        paths.append(path)
    return paths


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_manifest(directory, args, extra=None):
    """Config, seed and version; ``timestamp`` sits alone on its own line."""
    config = {k: v for k, v in vars(args).items() if k not in ("config", "quiet")}
    manifest = {
        "command": args.command,
        "config": config,
        "config_file": args.config,
        "seed": args.seed,
        "software": "caisens",
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    write_json(os.path.join(directory, "manifest.json"), manifest)


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_sens(args):
    for name in ("strata", "b_base", "b_inner", "b_final", "sweeps", "restarts", "table_draws"):
        if getattr(args, name) < 1:
            raise DataError(f"--{name.replace('_', '-')} must be at least 1")
    ds = load_csv(args.data, args.outcome, args.treatment, args.covariates, categorical=args.fixed_effects)
    for col in args.fixed_effects:
        ds = one_hot_expand(ds, col)
    for w in ds.report.warnings:
        logger.warning(w)
    if ds.report.dropped_rows:
        logger.warning("dropped %d of %d rows with missing values", ds.report.dropped_rows, ds.report.raw_rows)
    try:
        config = SensitivityConfig(
            xi_grid=tuple(sorted(set(args.xi))), alpha=args.alpha, B_base=args.b_base, B_inner=args.b_inner,
            B_final=args.b_final, L=args.table_draws, sweeps=args.sweeps, tail=args.tail, seed=args.seed,
            K=args.strata, threads=args.threads or default_threads(), restarts=args.restarts,
        )
    except ValueError as exc:
        raise DataError(str(exc))
    problem, model, scores = prepare(ds, config)
    balance = balance_report(ds, problem.strata)
    flagged = balance[balance["smd"].abs() > SMD_WARNING]
    if len(flagged):
        logger.warning(
            "%d stratum-covariate pairs have |SMD| > %g; consider refining the stratification",
            len(flagged), SMD_WARNING,
        )
    curve = sensitivity_curve(problem, config)

    os.makedirs(args.out, exist_ok=True)
    rows = curve.rows()
    write_rows(args.out, "curve", rows, args.fmt,
               ["xi", "lower_p", "upper_p", "lower_mc_se", "upper_mc_se"])
    write_rows(args.out, "plot_data", [{"xi": r["xi"], "upper_p": r["upper_p"],
                                        "upper_mc_se": r["upper_mc_se"]} for r in rows], "csv")
    mechanisms = []
    for p in curve.points:
        for side, mechs in (("upper", p.upper_mechanisms), ("lower", p.lower_mechanisms)):
            for s, dist in zip(problem.included, mechs or ()):
                mechanisms.append({"xi": p.xi, "bound": side, "stratum": s + 1, "pi": dist.probs.tolist()})
    write_json(os.path.join(args.out, "mechanisms.json"), mechanisms)
    write_rows(args.out, "balance", balance.to_dict("records"), "csv")
    summary = {
        "T_obs": curve.T_obs,
        "alpha": curve.alpha,
        "baseline_p": curve.baseline_p,
        "baseline_mc_se": curve.baseline_se,
        "robustness_value": curve.robustness_value,
        "tail": curve.tail,
        "uninformative": curve.uninformative,
        "units": ds.unit_count,
        "propensity_coefficients": model.coefficients,
        "strata": curve.diagnostics if curve.diagnostics else {
            "effective_K": problem.strata.effective_K,
            "stratum_sizes": problem.strata.stratum_sizes,
            "treated_counts": problem.strata.treated_counts,
            "excluded_strata": [int(s) + 1 for s in np.flatnonzero(problem.strata.degenerate)],
        },
    }
    write_json(os.path.join(args.out, "summary.json"), summary)
    write_manifest(args.out, args)

    _say(args, f"T_obs = {curve.T_obs:g}; baseline P = {curve.baseline_p:.4f} (MC se {curve.baseline_se:.4f})")
    _say(args, f"{'xi':>6} {'lower_p':>9} {'upper_p':>9} {'se(up)':>8}")
    for r in rows:
        _say(args, f"{r['xi']:>6g} {r['lower_p']:>9.4f} {r['upper_p']:>9.4f} {r['upper_mc_se']:>8.4f}")
    xs = curve.robustness_value
    _say(args, "robustness value: " + ("none within the grid" if xs is None else f"{xs:.4g}"))
    if curve.uninformative:
        logger.warning("baseline P-value exceeds alpha: the sensitivity analysis is not informative")
    return EXIT_OK


def cmd_simulate(args):
    from caisens.oracle.studies import simulate_ipw_study

    if any(not (r >= 0 and np.isfinite(r)) for r in args.rho):
        raise DataError("--rho values must be finite and nonnegative")
    if args.n < 2:
        raise DataError("--n must be at least 2")
    if args.reps < 1:
        raise DataError("--reps must be at least 1")
    if args.reps == 1:
        logger.warning("with a single replication the RMSE is just |bias| and the MC standard error is undefined")
    rows = [simulate_ipw_study(rho, N=args.n, reps=args.reps, seed=args.seed).row() for rho in args.rho]
    os.makedirs(args.out, exist_ok=True)
    write_rows(args.out, "ipw_study", rows, args.fmt)
    write_manifest(args.out, args)
    _say(args, f"{'rho':>5} {'mean_ipw':>9} {'target':>7} {'bias':>7} {'rmse':>7} {'se(bias)':>9}")
    for r in rows:
        _say(args, f"{r['rho']:>5g} {r['mean_ipw']:>9.3f} {r['ade_target']:>7.3f} {r['bias']:>7.3f} "
                   f"{r['rmse']:>7.3f} {r['bias_mc_se']:>9.3f}")
    return EXIT_OK


def cmd_verify(args):
    from caisens.oracle.suites import SUITES, run_suite

    names = args.suite or list(SUITES)
    unknown = [n for n in names + args.inject_fault if n not in SUITES]
    if unknown:
        raise DataError(f"unknown suite(s) {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    if args.trials is not None and args.trials < 1:
        raise DataError("--trials must be at least 1")
    results = [run_suite(n, args.trials, seed=args.seed, fault=n in args.inject_fault) for n in names]
    for r in results:
        print(r.line())
    os.makedirs(args.out, exist_ok=True)
    write_rows(args.out, "verify", [vars(r) for r in results], args.fmt,
               ["name", "passed", "trials", "max_error", "tolerance", "seconds", "detail"])
    write_manifest(args.out, args)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_power(args):
    from caisens.oracle.studies import fisher_power_study

    if args.reps < 1 or args.B < 1 or args.strata < 1:
        raise DataError("--reps, --b and --strata must be at least 1")
    if any(not (np.isfinite(t) and np.isfinite(g)) for t, g in args.designs):
        raise DataError("design values must be finite")
    base = None
    if args.data:
        base = load_csv(args.data, args.outcome, args.treatment, args.covariates)
    rows = []
    for tau, gamma in args.designs:
        res = fisher_power_study(tau, gamma, reps=args.reps, B=args.B, seed=args.seed, base=base,
                                 K=args.strata, alpha=args.alpha, tail=args.tail)
        rows.append(res.row())
        _say(args, f"tau={tau:g} gamma={gamma:g}: rejection rate {res.rate:.3f} (se {res.se:.3f})")
    os.makedirs(args.out, exist_ok=True)
    write_rows(args.out, "power_study", rows, args.fmt)
    write_manifest(args.out, args, {"base": args.data or "synthetic"})
    return EXIT_OK


COMMANDS = {"sens": cmd_sens, "simulate": cmd_simulate, "verify": cmd_verify, "power": cmd_power}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="warning: %(message)s", stream=sys.stderr)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleLPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, FileNotFoundError, SeparationError, RankDeficientError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
