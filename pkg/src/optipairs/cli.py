"""Command-line entry point: ``optipairs {thresholds,sweep,calibrate,simulate,backtest}``.

Defaults for any flag can be supplied through a JSON file named by the
``OPTIPAIRS_CONFIG`` environment variable; command-line flags still win.

Exit codes: 0 success (and, for ``thresholds``, a verified policy),
2 validation error, 3 solver failure or unverified policy, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .backtest import BacktestConfig, BacktestError, reverse_spread, run_backtest
from .calibration import (
    CalibrationError,
    SpreadSeries,
    build_spread,
    fit_ou,
    read_price_file,
    read_spread_file,
)
from .ou_kernel import KernelConfig, ModelParams
from .simulation import default_horizon, mc_value, simulate_path
from .threshold_solver import SWEEPABLE, SolverError, sensitivity_sweep, solve_policy
from .value_function import PiecewiseValue

CONFIG_ENV = "OPTIPAIRS_CONFIG"

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, EXIT_VALIDATION)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.datetime64):
        return str(obj)
    return obj


def dump_json(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def _csv(header: list[str], rows: list[list], config: dict) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_jsonable(config), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if isinstance(c, float) and not math.isfinite(c) else
                    (repr(c) if isinstance(c, float) else c) for c in r])
    return buf.getvalue()


def _render(fmt: str, doc: dict, header: list[str], rows: list[list]) -> str:
    if fmt == "json":
        return dump_json(doc)
    if fmt == "csv":
        return _csv(header, rows, doc["config"])
    return _table(header, rows)


def _emit(args, text: str) -> None:
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    else:
        sys.stdout.write(text)


def _params(args) -> ModelParams:
    try:
        return ModelParams(a=args.a, b=args.b, sigma=args.sigma, rho=args.rho, K=args.K, M=args.M)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc


def _kernel_cfg(args) -> KernelConfig:
    if not args.tol > 0:
        raise CliError("--tol must be positive", EXIT_VALIDATION)
    return KernelConfig(rel_tol=args.tol)


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _read_prices(path):
    try:
        return read_price_file(path)
    except FileNotFoundError as exc:
        raise CliError(f"file not found: {path}", EXIT_IO) from exc
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except (ValueError, KeyError) as exc:
        raise CliError(f"cannot parse {path}: {exc}", EXIT_VALIDATION) from exc


def _policy_doc(policy) -> dict:
    p = policy.params
    rep = policy.verification
    return {
        "x0": policy.x0,
        "x1": policy.x1,
        "x2": policy.x2,
        "A2": policy.A2,
        "B1": policy.B1,
        "B2": policy.B2,
        "C1": policy.C1,
        "C2": policy.C2,
        "buy_bound": p.buy_bound,
        "sell_bound": p.sell_bound,
        "verified": policy.verified,
        "verification": asdict(rep) if rep is not None else None,
        "alternatives": [list(a) for a in policy.alternatives],
    }


def _solve(args):
    try:
        return solve_policy(_params(args), args.grid_n, _kernel_cfg(args))
    except SolverError as exc:
        raise CliError(f"{type(exc).__name__}: {exc} {exc.details}", EXIT_SOLVER) from exc
    except ArithmeticError as exc:
        raise CliError(f"{type(exc).__name__}: {exc}", EXIT_SOLVER) from exc


# ---------------------------------------------------------------------------


def cmd_thresholds(args) -> int:
    policy = _solve(args)
    doc = {"command": "thresholds", "config": _config(args), "policy": _policy_doc(policy)}
    header = ["x0", "x1", "x2", "A2", "B1", "B2", "C1", "C2", "verified"]
    row = [policy.x0, policy.x1, policy.x2, policy.A2, policy.B1, policy.B2,
           policy.C1, policy.C2, policy.verified]
    _emit(args, _render(args.format, doc, header, [row]))
    return EXIT_OK if policy.verified else EXIT_SOLVER


def _parse_values(text: str) -> list[float]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise CliError("--values must list at least one number", EXIT_VALIDATION)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise CliError(f"bad --values: {exc}", EXIT_VALIDATION) from exc


def cmd_sweep(args) -> int:
    if args.vary is None or args.values is None:
        raise CliError("sweep needs --vary and --values", EXIT_VALIDATION)
    values = _parse_values(args.values)
    rows = sensitivity_sweep(_params(args), args.vary, values, args.grid_n, _kernel_cfg(args))
    doc = {"command": "sweep", "config": _config(args), "rows": [asdict(r) for r in rows]}
    header = [args.vary, "x0", "x1", "x2", "verified"]
    table = [[r.value, r.x0, r.x1, r.x2, r.verified] for r in rows]
    _emit(args, _render(args.format, doc, header, table))
    return EXIT_OK if all(r.error is None for r in rows) else EXIT_SOLVER


def _spread_from_args(args) -> SpreadSeries:
    if args.spread:
        try:
            return read_spread_file(args.spread, args.dt_data)
        except FileNotFoundError as exc:
            raise CliError(f"file not found: {args.spread}", EXIT_IO) from exc
        except (ValueError, KeyError) as exc:
            raise CliError(f"cannot parse {args.spread}: {exc}", EXIT_VALIDATION) from exc
    if not (args.p1 and args.p2):
        raise CliError("give --spread FILE or both --p1 and --p2", EXIT_VALIDATION)
    p1, p2 = _read_prices(args.p1), _read_prices(args.p2)
    try:
        return build_spread(p1, p2, args.window, args.dt_data)
    except CalibrationError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc


def cmd_calibrate(args) -> int:
    spread = _spread_from_args(args)
    try:
        fit = fit_ou(spread, args.min_length, args.fix_b)
    except CalibrationError as exc:
        raise CliError(f"{type(exc).__name__}: {exc}", EXIT_VALIDATION) from exc
    doc = {"command": "calibrate", "config": _config(args), "fit": fit.as_dict()}
    header = ["a", "b", "sigma", "se_a", "se_b", "se_sigma", "n"]
    row = [fit.a, fit.b, fit.sigma, fit.se_a, fit.se_b, fit.se_sigma, fit.n]
    _emit(args, _render(args.format, doc, header, [row]))
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _params(args)
    if not args.dt > 0:
        raise CliError("--dt must be positive", EXIT_VALIDATION)
    if args.kind == "path":
        if args.steps is None or args.steps < 1:
            raise CliError("--kind path needs --steps N (N >= 1)", EXIT_VALIDATION)
        start = params.b if args.x is None else args.x
        z = simulate_path(params, start, args.dt, args.steps, args.seed)
        dates = np.busday_offset(np.datetime64(args.start_date, "D"), np.arange(z.size), roll="forward")
        doc = {"command": "simulate", "config": _config(args),
               "path": {"date": [str(d) for d in dates], "z": z.tolist()}}
        rows = [[str(d), float(v)] for d, v in zip(dates, z)]
        if args.format == "csv":
            # plain date,z file that `calibrate --spread` reads back
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["date", "z"])
            w.writerows([[d, repr(v)] for d, v in rows])
            _emit(args, buf.getvalue())
        else:
            _emit(args, _render(args.format, doc, ["date", "z"], rows))
        return EXIT_OK

    if args.paths < 100:
        raise CliError("--paths must be >= 100", EXIT_VALIDATION)
    policy = _solve(args)
    x = params.b if args.x is None else args.x
    if x < params.M:
        raise CliError("--x must be >= M", EXIT_VALIDATION)
    horizon = default_horizon(params) if args.horizon is None else args.horizon
    pv = PiecewiseValue(policy)
    results = []
    for i in (0, 1):
        mean, se = mc_value(policy, x, i, args.paths, args.dt, horizon, args.seed)
        results.append({"i": i, "x": x, "mc_mean": mean, "mc_stderr": se, "analytic": pv.v(i, x)})
    doc = {"command": "simulate", "config": _config(args), "triple": list(policy.triple),
           "results": results}
    header = ["i", "x", "mc_mean", "mc_stderr", "analytic"]
    rows = [[r[h] for h in header] for r in results]
    _emit(args, _render(args.format, doc, header, rows))
    return EXIT_OK


def cmd_backtest(args) -> int:
    if not (args.p1 and args.p2):
        raise CliError("backtest needs --p1 and --p2", EXIT_VALIDATION)
    p1, p2 = _read_prices(args.p1), _read_prices(args.p2)
    try:
        spread = build_spread(p1, p2, args.window, args.dt_data)
    except CalibrationError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc
    if args.from_date:
        keep = spread.dates >= np.datetime64(args.from_date, "D")
        if keep.sum() < 2:
            raise CliError("fewer than 2 spread points after --from-date", EXIT_VALIDATION)
        spread = SpreadSeries(spread.dates[keep], spread.z[keep], spread.dt)
    policy = _solve(args)
    if args.reverse:
        # trade -Z: long leg 2, short leg 1
        spread = reverse_spread(spread, policy.params.b)
        p1, p2 = p2, p1
    try:
        cfg = BacktestConfig(
            policy, args.capital, args.commission,
            reentry_after_stop=not args.no_reentry, reinvest=not args.no_reinvest,
        )
        report = run_backtest(cfg, spread, p1, p2)
    except (BacktestError, ValueError) as exc:
        raise CliError(f"{type(exc).__name__}: {exc}", EXIT_VALIDATION) from exc
    try:
        if args.trades_out:
            report.write_trades(args.trades_out)
        if args.equity_out:
            report.write_equity(args.equity_out)
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}", EXIT_IO) from exc
    doc = {
        "command": "backtest",
        "config": _config(args),
        "triple": list(policy.triple),
        "summary": report.summary(),
        "trades": [dict(zip(["entry_date", "exit_date", "entry_z", "exit_z", "exit_reason",
                             "profit"], r[:6])) for r in report.trade_rows()],
    }
    header = ["entry_date", "exit_date", "entry_z", "exit_z", "exit_reason", "profit"]
    rows = [[str(t.entry_date), str(t.exit_date), t.entry_z, t.exit_z, t.exit_reason, t.profit]
            for t in report.trades]
    _emit(args, _render(args.format, doc, header, rows))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("model")
    d = ModelParams()
    g.add_argument("--a", type=float, default=d.a, help="reversion rate")
    g.add_argument("--b", type=float, default=d.b, help="equilibrium level")
    g.add_argument("--sigma", type=float, default=d.sigma, help="volatility")
    g.add_argument("--rho", type=float, default=d.rho, help="discount rate")
    g.add_argument("--K", type=float, default=d.K, help="fixed cost per transaction")
    g.add_argument("--M", type=float, default=d.M, help="stop-loss level")
    common.add_argument("--tol", type=float, default=KernelConfig().rel_tol,
                        help="relative quadrature tolerance")
    common.add_argument("--grid-n", type=int, default=2001, help="verification grid points")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv", "table"), default="json")
    common.add_argument("--out", default=None, help="write output here instead of stdout")

    data = _Parser(add_help=False)
    data.add_argument("--p1", help="price file for leg 1 (date, close)")
    data.add_argument("--p2", help="price file for leg 2 (date, close)")
    data.add_argument("--window", type=int, default=1000, help="moving-average window")
    data.add_argument("--dt-data", type=float, default=1.0 / 252, help="years per observation")

    parser = _Parser(prog="optipairs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("thresholds", parents=[common], help="solve and verify (x0, x1, x2)")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("sweep", parents=[common], help="thresholds across one parameter")
    p.add_argument("--vary", choices=SWEEPABLE)
    p.add_argument("--values", help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", parents=[common, data], help="fit (a, b, sigma)")
    p.add_argument("--spread", help="spread file (date, z) instead of --p1/--p2")
    p.add_argument("--min-length", type=int, default=30)
    p.add_argument("--fix-b", type=float, default=None, help="pin the equilibrium level")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo policy value or OU path")
    p.add_argument("--kind", choices=("value", "path"), default="value")
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--x", type=float, default=None, help="start level (default b)")
    p.add_argument("--steps", type=int, default=None, help="path length for --kind path")
    p.add_argument("--start-date", default="2000-01-03", help="first date for --kind path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("backtest", parents=[common, data], help="historical backtest")
    p.add_argument("--capital", type=float, default=100_000.0)
    p.add_argument("--commission", type=float, default=5.0)
    p.add_argument("--reverse", action="store_true", help="trade -Z (swap the legs)")
    p.add_argument("--no-reentry", action="store_true", help="stop trading after a stop-loss")
    p.add_argument("--no-reinvest", action="store_true", help="size every trade off initial capital")
    p.add_argument("--from-date", default=None, help="first date traded")
    p.add_argument("--trades-out", default=None)
    p.add_argument("--equity-out", default=None)
    p.set_defaults(func=cmd_backtest)
    return parser


def _load_config_defaults(parser: argparse.ArgumentParser) -> None:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return
    try:
        with open(path) as fh:
            overrides = json.load(fh)
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {path}", EXIT_IO) from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    if not isinstance(overrides, dict):
        raise CliError("config file must hold a JSON object", EXIT_VALIDATION)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    known = set()
    for sp in subparsers.choices.values():
        known |= {a.dest for a in sp._actions}
    unknown = set(overrides) - known
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_VALIDATION)
    for sp in subparsers.choices.values():
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in overrides.items() if k in dests})


def _join_values(argv: list[str]) -> list[str]:
    # "--values -0.16,-0.18" would otherwise be read as an unknown option
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--values":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--values={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_values(list(sys.argv[1:] if argv is None else argv))
    try:
        _load_config_defaults(parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(dump_json({"error": str(exc), "exit_code": exc.code}))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
