"""Command-line front end.

Models are read from JSON files (see :mod:`mapsoe.modelfile`); tabular
results go to CSV with a header row, or to a JSON envelope with
``--format json``.

Exit codes: 0 success, 2 validation failure, 3 infeasible fit or unstable
queue, 4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (asymptotic_rate, count_mean, count_report, count_third_moment,
                   count_variance, dispersion_limit, validate)
from .errors import (InfeasibleFitError, InstabilityError, MapError, NumericalError,
                     ValidationError)
from .fitting import FitProblem, FitResult, FitTargets, fit_mtcp4, targets_from_map
from .interevent import autocorrelations, interevent_moment, scv
from .modelfile import ModelFileError, dump_model, load_model
from .qbd import build_qbd, default_rho_grid, rate_matrix_residual, solve_queue, workload_sweep
from .simulate import SimConfig, estimate_count_moments, estimate_interevent
from .transforms import Mmpp, Mtcp, coupled_map_from_mmpp, mmpp_from_mtcp, mtcp_from_slow_mmpp

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


class UsageError(Exception):
    """Bad command line; reported with exit code 4."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers -----------------------------------------------------------------

def parse_grid(text: str) -> list[float]:
    """``"start:stop:step"`` (stop included) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(v) for v in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if not step > 0 or stop < start:
                raise UsageError(f"empty or ill-formed grid {text!r}")
            n = int(math.floor((stop - start) / step + 1e-9))
            return [start + k * step for k in range(n + 1)]
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}; use start:stop:step or a,b,c") from None
    if not values:
        raise UsageError("grid is empty")
    return values


def _parse_vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse vector {text!r}") from None


def _fmt(v, precision: int):
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(format(float(v), f".{precision}g"))


class Table:
    def __init__(self, columns, rows=None, meta=None):
        self.columns = list(columns)
        self.rows = [] if rows is None else rows
        self.meta = meta or {}

    def add(self, *values):
        self.rows.append(list(values))

    def render(self, fmt: str, precision: int, command: str) -> str:
        if fmt == "json":
            doc = {"command": command,
                   "columns": self.columns,
                   "rows": [[_fmt(v, precision) for v in r] for r in self.rows]}
            if self.meta:
                doc["meta"] = {k: _fmt(v, precision) for k, v in self.meta.items()}
            # one row per line
            parts = [f"  {json.dumps(k)}: " + (
                "[\n    " + ",\n    ".join(json.dumps(r) for r in v) + "\n  ]"
                if k == "rows" and v else json.dumps(v)) for k, v in doc.items()]
            return "{\n" + ",\n".join(parts) + "\n}\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow(["" if v is None else
                        ("true" if v is True else "false" if v is False else
                         format(float(v), f".{precision}g") if not isinstance(v, str) else v)
                        for v in r])
        return buf.getvalue()


def _emit(args, text: str):
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise ModelFileError(f"cannot write {args.out}: {exc}") from None
    else:
        sys.stdout.write(text)


def _quantities(pairs) -> Table:
    t = Table(["quantity", "value"])
    for k, v in pairs:
        t.add(k, v)
    return t


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    loaded = load_model(args.model)
    diags = validate(loaded.map)
    table = Table(["code", "message"], [[d.code, d.message] for d in diags])
    if not diags:
        table.meta = {"valid": True, "kind": loaded.kind, "order": loaded.map.order}
    _emit(args, table.render(args.format, args.precision, "validate"))
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_analyze(args) -> int:
    m = load_model(args.model).map
    m.require_valid()
    eta = np.array(_parse_vector(args.eta)) if args.eta else m.eta
    base = m.stationary()
    ts = parse_grid(args.t_grid)
    rep = count_report(base, ts, third=args.third)
    cols = ["t", "mean", "variance"] + (["third_moment"] if args.third else [])
    if eta is not None:
        non_stat = m.with_eta(eta)
        mean_eta = [count_mean(non_stat, t) for t in ts]
        cols.append("mean_eta")
    cols += ["rate", "d2"]
    table = Table(cols, meta={"rate": rep.rate, "d2": rep.dispersion_limit})
    for i, t in enumerate(ts):
        row = [t, rep.mean[i], rep.variance[i]]
        if args.third:
            row.append(rep.third_moment[i])
        if eta is not None:
            row.append(mean_eta[i])
        row += [rep.rate, rep.dispersion_limit]
        table.add(*row)
    _emit(args, table.render(args.format, args.precision, "analyze"))
    return EXIT_OK


def _interevent_rows(m, n_moments: int, n_lags: int):
    rows = [(f"M{k}", interevent_moment(m, k)) for k in range(1, n_moments + 1)]
    rows += [("c2", scv(m)), ("d2", dispersion_limit(m))]
    if n_lags:
        rows += [(f"rho{j}", r) for j, r in enumerate(autocorrelations(m, n_lags), start=1)]
    return rows


def cmd_interevent(args) -> int:
    m = load_model(args.model).map.stationary().require_valid()
    table = _quantities(_interevent_rows(m, args.moments, args.lags))
    _emit(args, table.render(args.format, args.precision, "interevent"))
    return EXIT_OK


def _as_mmpp(loaded) -> Mmpp:
    if isinstance(loaded.model, Mmpp):
        return loaded.model
    return Mmpp.from_map(loaded.map)


def _as_mtcp(loaded) -> Mtcp:
    if isinstance(loaded.model, Mtcp):
        return loaded.model
    return Mtcp.from_map(loaded.map)


def cmd_transform(args) -> int:
    loaded = load_model(args.model)
    loaded.map.require_valid()
    if args.kind == "soe":
        result = mtcp_from_slow_mmpp(_as_mmpp(loaded), allow_boundary=args.allow_boundary)
    elif args.kind == "couple":
        result = coupled_map_from_mmpp(_as_mmpp(loaded))
    else:
        result = mmpp_from_mtcp(_as_mtcp(loaded))
    _emit(args, dump_model(result))
    return EXIT_OK


def _fit_table(res: FitResult, targets: FitTargets) -> Table:
    m = res.mtcp
    rows = [("feasible", res.feasible), ("start", res.start), ("objective", res.objective)]
    rows += [(f"residual_{k}", v) for k, v in res.constraint_residuals.items()]
    rows += _interevent_rows(m, 3, max(targets.constrained_lags, default=3))
    rows += [(f"x{i + 1}", v) for i, v in enumerate(res.x)]
    return _quantities(rows)


def cmd_fit(args) -> int:
    if args.from_model:
        targets = targets_from_map(load_model(args.from_model).map.stationary(), n_lags=args.lags)
    else:
        try:
            doc = json.loads(Path(args.targets).read_text())
        except OSError as exc:
            raise ModelFileError(f"cannot read {args.targets}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"{args.targets}: malformed JSON ({exc})") from None
        try:
            targets = FitTargets.from_dict(doc)
        except (KeyError, TypeError) as exc:
            raise ModelFileError(f"{args.targets}: bad targets file ({exc})") from None
    problem = FitProblem(targets, n_lags=args.lags, constraint_tol=args.tol,
                         multistart=args.multistart, seed=args.seed,
                         max_outer=args.max_outer, inner_maxfev=args.inner_maxfev)
    code = EXIT_OK
    try:
        res = fit_mtcp4(problem)
    except InfeasibleFitError as exc:
        if exc.best is None:
            raise
        print(f"infeasible: {exc}", file=sys.stderr)
        res, code = exc.best, EXIT_INFEASIBLE
    _emit(args, _fit_table(res, targets).render(args.format, args.precision, "fit"))
    if args.model_out:
        dump_model(Mtcp.from_map(res.mtcp), args.model_out)
    return code


def cmd_queue(args) -> int:
    m = load_model(args.model).map.stationary()
    sol = solve_queue(m, mu=args.mu, rho=args.rho)
    mu = args.mu if args.mu is not None else asymptotic_rate(m) / args.rho
    resid = rate_matrix_residual(build_qbd(m, mu), sol.R)
    table = _quantities([("rho", sol.utilization), ("mu", mu), ("mean", sol.mean_q),
                         ("variance", sol.var_q), ("P0", sol.level_probability(0)),
                         ("rate_matrix_residual", resid)])
    _emit(args, table.render(args.format, args.precision, "queue"))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = load_model(args.base).map.stationary()
    alt = load_model(args.alt).map.stationary()
    grid = parse_grid(args.grid) if args.grid else default_rho_grid()
    rows = workload_sweep(base, alt, grid)
    cols = ["rho", "mu", "mean_base", "mean_alt", "mean_prop_err",
            "var_base", "var_alt", "var_prop_err"]
    table = Table(cols, [[getattr(r, c) for c in cols] for r in rows])
    _emit(args, table.render(args.format, args.precision, "sweep"))
    return EXIT_OK


def cmd_simulate(args) -> int:
    m = load_model(args.model).map.stationary().require_valid()
    table = Table(["statistic", "t", "point", "std_error", "analytic", "replications"])
    if args.events:
        cfg = SimConfig(n_events=args.events, replications=args.replications, seed=args.seed)
        est = estimate_interevent(m, cfg, n_lags=args.lags)
        table.add("M1", None, est.m1.point, est.m1.std_error, interevent_moment(m, 1),
                  est.m1.replications)
        table.add("c2", None, est.scv.point, est.scv.std_error, scv(m), est.scv.replications)
        exact = autocorrelations(m, args.lags) if args.lags else []
        for j, e in enumerate(est.autocorr, start=1):
            table.add(f"rho{j}", None, e.point, e.std_error, exact[j - 1], e.replications)
    else:
        ts = parse_grid(args.t_grid)
        if any(t <= 0 for t in ts):
            raise ValidationError("simulation times must be > 0")
        cfg = SimConfig(horizon=max(ts), replications=args.replications, seed=args.seed)
        est = estimate_count_moments(m, ts, cfg)
        for t in sorted(ts):
            mean, var = count_mean(m, t), count_variance(m, t)
            cm3 = count_third_moment(m, t) - 3 * mean * var - mean**3
            for name, key, exact in (("mean", 1, mean), ("variance", "var", var),
                                     ("third_central", "cm3", cm3)):
                e = est[(float(t), key)]
                table.add(name, t, e.point, e.std_error, exact, e.replications)
    _emit(args, table.render(args.format, args.precision, "simulate"))
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _global_options(parser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--format", choices=("csv", "json"), default=d("csv"),
                        help="output format for tables (default csv)")
    parser.add_argument("--precision", type=int, default=d(6),
                        help="significant digits in numeric output (default 6)")
    parser.add_argument("--seed", type=int, default=d(0), help="random seed (fit, simulate)")
    parser.add_argument("--out", default=d(None), help="write output here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mapsoe", description="Markovian arrival process toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", parents=[common], help="counting-process moments on a time grid")
    p.add_argument("model")
    p.add_argument("--t-grid", default="0:10:1", help="start:stop:step or a,b,c (default 0:10:1)")
    p.add_argument("--third", action="store_true", help="include the third raw moment")
    p.add_argument("--eta", help="initial phase law (comma list) for a non-stationary mean column")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("interevent", parents=[common], help="inter-event moments and autocorrelations")
    p.add_argument("model")
    p.add_argument("--lags", type=int, default=3)
    p.add_argument("--moments", type=int, default=3)
    p.set_defaults(func=cmd_interevent)

    p = sub.add_parser("transform", parents=[common], help="build a related model")
    p.add_argument("model")
    p.add_argument("kind", choices=("soe", "couple", "mmpp-of-mtcp"))
    p.add_argument("--allow-boundary", action="store_true",
                   help="accept lambda_i == S_i for soe (with a warning)")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fit", parents=[common], help="fit an MTCP of order 4")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--targets", help="JSON file with M1, c2, M3, rho[, constrained_lags]")
    src.add_argument("--from-model", help="take targets from this model file")
    p.add_argument("--lags", type=int, default=50, help="lags in the objective (default 50)")
    p.add_argument("--tol", type=float, default=1e-6, help="constraint tolerance")
    p.add_argument("--multistart", type=int, default=64)
    p.add_argument("--max-outer", type=int, default=30, help="augmented Lagrangian rounds per start")
    p.add_argument("--inner-maxfev", type=int, default=20000,
                   help="function evaluations per Nelder-Mead solve")
    p.add_argument("--model-out", help="write the fitted MTCP here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("queue", parents=[common], help="MAP/M/1 queue length moments")
    p.add_argument("model")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mu", type=float)
    g.add_argument("--rho", type=float)
    p.set_defaults(func=cmd_queue)

    p = sub.add_parser("sweep", parents=[common], help="compare two models over utilisations")
    p.add_argument("base")
    p.add_argument("alt")
    p.add_argument("--grid", help="utilisation grid (default 0.009:0.891:0.009)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimates with standard errors")
    p.add_argument("model")
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--t-grid", default="1", help="count times (default 1)")
    p.add_argument("--events", type=int, help="estimate inter-event statistics from this many events")
    p.add_argument("--lags", type=int, default=3)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ModelFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InfeasibleFitError, InstabilityError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except MapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
