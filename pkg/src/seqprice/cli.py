"""Command-line entry point.

Exit codes: 0 success, 1 a reproduction check failed, 2 invalid input,
3 a solver did not converge.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiments as ex
from .distributions import ValuationDistribution
from .equilibrium import (solve_exponential_closed_form, solve_given_ranking, surplus_shares)
from .model import (Instance, InvalidInstanceError, Objective, default_instance, dump_instance,
                    load_instance, parse_ranking)
from .optimize import ConvergenceError
from .ranking import DEFAULT_ENUM_CAP, descending_ranking, double_rank, enumerate_optimal, gps
from .relaxation import optimize_relaxed
from .simulate import simulate_va, simulate_web
from .web import WebLayout, solve_web_given_ranking

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3


def _emit(obj, out: Optional[str]) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# used when no --instance is given; the same data ships as instances/default.json
DEFAULT_RHO = 0.9
DEFAULT_WEB = {"k": 2, "kappa": 1.0, "tau_p": 1.0, "tau_c": 1.0 / 9.0}


def _instance(args) -> tuple[Instance, dict]:
    if args.instance is None:
        inst = default_instance(rho=DEFAULT_RHO)
        return inst, dict(inst.to_dict(), web=dict(DEFAULT_WEB))
    return load_instance(args.instance)


def _ranking(text: Optional[str], inst: Instance, fallback) -> tuple[int, ...]:
    return parse_ranking(text, inst.n) if text else tuple(fallback)


def _layout(args, doc: dict) -> WebLayout:
    base = doc.get("web", {})
    data = dict(base) if isinstance(base, dict) else {}
    for key, attr in (("k", "k"), ("kappa", "kappa"), ("tau_p", "tau_p"), ("tau_c", "tau_c"),
                      ("rho_page", "rho_page")):
        val = getattr(args, attr, None)
        if val is not None:
            data[key] = val
    if "k" not in data:
        raise InvalidInstanceError("web layout needs k (flag --k or the instance's web block)")
    return WebLayout.from_dict(data)


# ------------------------------------------------------------------ commands

def cmd_solve(args) -> int:
    inst, _ = _instance(args)
    ranking = _ranking(args.ranking, inst, range(inst.n))
    if args.method == "closed":
        res = solve_exponential_closed_form(inst, ranking)
    else:
        res = solve_given_ranking(inst, ranking)
    out = res.to_dict()
    if res.total_value != 0.0:
        out["seller_share"] = surplus_shares(res)[0]
    _emit(out, args.out)
    return EXIT_OK


def cmd_rank(args) -> int:
    inst, _ = _instance(args)
    if args.algo == "enum":
        res = enumerate_optimal(inst, cap=args.cap, threads=args.threads)
    elif args.algo == "gps":
        res = gps(inst, _ranking(args.initial, inst, range(inst.n)), threads=args.threads)
    else:
        res = double_rank(inst)
    _emit(res.to_dict(), args.out)
    return EXIT_OK


def cmd_web(args) -> int:
    inst, doc = _instance(args)
    layout = _layout(args, doc)
    ranking = _ranking(args.ranking, inst, descending_ranking(inst))
    res = solve_web_given_ranking(inst, layout, ranking, seed=args.seed)
    out = res.to_dict()
    out["seller_share"] = res.seller_value / res.total_value if res.total_value else None
    _emit(out, args.out)
    return EXIT_OK


def cmd_relax(args) -> int:
    inst, _ = _instance(args)
    res = optimize_relaxed(inst, restarts=args.restarts, seed=args.seed)
    _emit(res.to_dict(), args.out)
    if not res.converged:
        print(f"error: Frank-Wolfe gap {res.fw_gap:.3g} above tolerance", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst, doc = _instance(args)
    ranking = _ranking(args.ranking, inst, range(inst.n))
    if args.k is not None or args.rho_page is not None:
        layout = _layout(args, doc)
        eq = solve_web_given_ranking(inst, layout, ranking, seed=args.seed)
        rep = simulate_web(inst, layout, ranking, [pg.prices for pg in eq.pages],
                           [pg.threshold for pg in eq.pages], args.episodes, args.seed,
                           threads=args.threads)
    else:
        eq = solve_given_ranking(inst, ranking)
        rep = simulate_va(inst, ranking, eq.prices, eq.thresholds, args.episodes, args.seed,
                          threads=args.threads)
    out = rep.to_dict()
    out["analytic_seller"] = eq.seller_value
    out["analytic_consumer"] = eq.consumer_value
    _emit(out, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInstanceError(f"malformed JSON in {args.spec}: {exc}") from None
    if "instance" in data:
        inst = Instance.from_dict(data["instance"])
    elif "instance_path" in data:
        inst = load_instance(Path(args.spec).parent / data["instance_path"])[0]
    else:
        inst = default_instance()
    spec = ex.SweepSpec.from_dict(data, inst)
    ex.write_csv(args.out, ex.sweep_columns(spec), ex.run_sweep(spec, threads=args.threads))
    return EXIT_OK


def cmd_table1(args) -> int:
    table, checks = ex.table1_reproduction(threads=args.threads)
    ex.write_csv(args.out, ex.SwitchTable.COLUMNS, table.rows())
    failed = 0
    for chk in checks:
        print(f"{'PASS' if chk.ok else 'FAIL'}  {chk.name}: {chk.detail}", file=sys.stderr)
        failed += not chk.ok
    return EXIT_CHECK if failed else EXIT_OK


def _dist_arg(text: str) -> ValuationDistribution:
    kind, _, params = text.partition(":")
    vals = [float(x) for x in params.split(",") if x] if params else []
    if kind == "exp":
        return ValuationDistribution.exponential(*(vals or [1.0]))
    if kind == "gamma" and len(vals) == 2:
        return ValuationDistribution.gamma(*vals)
    raise InvalidInstanceError(f"distribution {text!r}: use exp[:alpha] or gamma:shape,scale")


def _grid(text: str) -> list[float]:
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return [float(x) for x in np.linspace(float(lo), float(hi), int(n))]
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise InvalidInstanceError(f"grid {text!r}: use lo:hi:count or a comma list") from None


def cmd_fig_double_rank(args) -> int:
    inst = default_instance(_dist_arg(args.dist))
    rows = ex.double_rank_efficiency(inst, _grid(args.grid), threads=args.threads)
    ex.write_csv(args.out, ex.DOUBLE_RANK_COLUMNS, rows)
    return EXIT_OK


def cmd_fig_prices(args) -> int:
    inst = default_instance(_dist_arg(args.dist))
    rows = ex.price_vs_patience(inst, _grid(args.grid), threads=args.threads)
    ex.write_csv(args.out, ex.price_columns(inst.n), rows)
    return EXIT_OK


def cmd_fig_shares(args) -> int:
    template = default_instance(rho=args.rho)
    # page patience follows from rho through the clock rates, so kappa matters
    layouts = [WebLayout(k, kappa)
               for k in args.ks for kappa in sorted({1.0, float(k)})]
    rows = ex.surplus_share_sweep(_grid(args.shapes), template, layouts, threads=args.threads)
    ex.write_csv(args.out, ex.SHARE_COLUMNS, rows)
    return EXIT_OK


def cmd_fig_gps(args) -> int:
    rows = ex.gps_complexity([int(x) for x in _grid(args.sizes)], args.trials, args.seed)
    ex.write_csv(args.out, ex.GPS_COLUMNS, rows)
    return EXIT_OK


def cmd_default_instance(args) -> int:
    inst = default_instance(_dist_arg(args.dist), rho=args.rho,
                            objective=Objective.parse(args.objective))
    if args.out:
        dump_instance(inst, args.out)
    else:
        print(json.dumps(inst.to_dict(), indent=2))
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # suppressed defaults let the flags appear before or after the subcommand
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (default 1)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (default 0)")

    p = argparse.ArgumentParser(prog="seqprice", parents=[common],
                                description="Equilibrium pricing and ranking for sequential "
                                            "and page-based product presentation.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                            argument_default=argparse.SUPPRESS)
        sp.set_defaults(func=fn)
        return sp

    def inst_args(sp):
        sp.add_argument("--instance", default=None, help="instance JSON (default: built-in six products)")
        sp.add_argument("--out", default=None, help="write output here instead of stdout")

    def web_args(sp):
        sp.add_argument("--k", type=int, default=None, help="products per page")
        sp.add_argument("--kappa", type=float, default=None, help="acceleration factor in [1, k]")
        sp.add_argument("--tau-p", dest="tau_p", type=float, default=None)
        sp.add_argument("--tau-c", dest="tau_c", type=float, default=None)
        sp.add_argument("--rho-page", dest="rho_page", type=float, default=None,
                        help="page patience; overrides the clock rates")

    sp = add("solve", cmd_solve, "equilibrium for one ranking")
    inst_args(sp)
    sp.add_argument("--ranking", default=None, help="1-based presentation order, e.g. 6,5,4,3,2,1")
    sp.add_argument("--method", choices=("numeric", "closed"), default="numeric")

    sp = add("rank", cmd_rank, "search for the best ranking")
    inst_args(sp)
    sp.add_argument("--algo", choices=("gps", "enum", "double-rank"), default="gps")
    sp.add_argument("--initial", default=None, help="GPS starting ranking (default identity)")
    sp.add_argument("--cap", type=int, default=DEFAULT_ENUM_CAP, help="largest N to enumerate")

    sp = add("web", cmd_web, "page-based equilibrium for one ranking")
    inst_args(sp)
    web_args(sp)
    sp.add_argument("--ranking", default=None, help="default: descending value margins")

    sp = add("relax", cmd_relax, "optimize the doubly stochastic relaxation")
    inst_args(sp)
    sp.add_argument("--restarts", type=int, default=16)

    sp = add("simulate", cmd_simulate, "Monte-Carlo check of an equilibrium")
    inst_args(sp)
    web_args(sp)
    sp.add_argument("--ranking", default=None)
    sp.add_argument("--episodes", type=int, default=1_000_000)

    sp = add("sweep", cmd_sweep, "parameter sweep from a JSON spec, CSV output")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", default="-")

    sp = add("table1", cmd_table1, "ranking switch table for Gamma(2, 0.5) with checks")
    sp.add_argument("--out", default="-")

    sp = add("fig-double-rank", cmd_fig_double_rank, "double-rank efficiency over rho")
    sp.add_argument("--dist", default="exp:1", help="exp[:alpha] or gamma:shape,scale")
    sp.add_argument("--grid", default="0.02:1:50")
    sp.add_argument("--out", default="-")

    sp = add("fig-prices", cmd_fig_prices, "optimal prices and ranking over rho")
    sp.add_argument("--dist", default="exp:1")
    sp.add_argument("--grid", default="0.01:1:100")
    sp.add_argument("--out", default="-")

    sp = add("fig-shares", cmd_fig_shares, "seller surplus share over the Gamma shape")
    sp.add_argument("--shapes", default="0.5,1,1.5,2,2.5,3")
    sp.add_argument("--ks", type=lambda s: [int(x) for x in s.split(",")], default=[2, 3, 6])
    sp.add_argument("--rho", type=float, default=0.9)
    sp.add_argument("--out", default="-")

    sp = add("fig-gps", cmd_fig_gps, "GPS iterations against N")
    sp.add_argument("--sizes", default="3,4,5,6,7,8")
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--out", default="-")

    sp = add("default-instance", cmd_default_instance, "write the built-in six-product instance")
    sp.add_argument("--dist", default="exp:1")
    sp.add_argument("--rho", type=float, default=DEFAULT_RHO)
    sp.add_argument("--objective", default="profit")
    sp.add_argument("--out", default=None)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("threads", 1), ("seed", 0)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InvalidInstanceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
