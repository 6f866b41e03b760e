"""Command-line front end: experiment reproductions and the check suite.

Subcommands emit deterministic CSV artifacts (full parameter echo and master
seed in a ``#`` header line; rerunning with the same seed reproduces each
file byte for byte):

* ``density-rho`` / ``density-k`` -- equilibrium histograms of the first
  rating while one parameter sweeps;
* ``bias-scan``   -- equilibrium mean rating against the true skill;
* ``k-scan``      -- mean |X0 - rho0| across a logarithmic K grid;
* ``verify``      -- the named check suite (nonzero exit on any failure);
* ``reach``       -- construct, save and replay a forced-score path plan;
* ``simulate``    -- one ensemble run dumped as samples.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .dynamics import find_path_nd
from .model import LinkFunction, RatingVector, make_params
from .montecarlo import (EnsembleConfig, InitialCondition, default_t_star,
                         derive_seed, format_header, make_histogram,
                         run_ensemble, write_histogram_csv,
                         write_samples_csv)

DEFAULT_SEED = 0x454C4F  # "ELO"

DENSITY_RHO_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
DENSITY_K_GRID = (0.02, 0.1, 0.4, 0.8, 1.2)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _link_scale(args) -> float:
    # --L and --c are synonyms for the logistic scale (its Lipschitz constant)
    if args.c is not None and args.L is not None and args.c != args.L:
        raise ValueError("--c and --L disagree; give one of them")
    for value in (args.c, args.L):
        if value is not None:
            return value
    return 0.5


def _build_params(n: int, k: float, args, skills=None):
    link = LinkFunction.logistic(_link_scale(args))
    return make_params(n, k, link=link, skills=skills,
                       score_kind=args.score_kind, p_tie=args.p_tie)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(args, **extra) -> dict:
    fields = {"command": args.command, "seed": args.seed}
    fields.update(extra)
    return fields


def _fmt(value: float) -> str:
    return f"{value:g}"


# -- density sweeps -----------------------------------------------------------


def cmd_density_rho(args) -> int:
    out = _out_dir(args)
    rho_values = args.rho1 if args.rho1 else list(DENSITY_RHO_GRID)
    c = _link_scale(args)
    for idx, rho1 in enumerate(rho_values):
        params = _build_params(2, args.k, args, skills=[rho1, -rho1])
        t_star = args.t_star if args.t_star is not None else default_t_star(args.k)
        cfg = EnsembleConfig(params=params, m=args.m, t_star=t_star,
                             master_seed=derive_seed(args.seed, 0xD0, idx),
                             initial=InitialCondition.zero())
        result = run_ensemble(cfg)
        hist = make_histogram(result.samples[:, 0], args.bins)
        path = out / f"density_rho_{_fmt(rho1)}.csv"
        write_histogram_csv(hist, path, _echo(
            args, rho1=rho1, k=args.k, c=c, n=2, m=args.m, t_star=t_star,
            bins=args.bins, score_kind=args.score_kind))
        print(f"wrote {path} ({args.m} samples)")
    return 0


def cmd_density_k(args) -> int:
    out = _out_dir(args)
    k_values = args.k if args.k else list(DENSITY_K_GRID)
    c = _link_scale(args)
    for k in k_values:
        if k * c >= 1.0:
            return _fail(f"K={k:g} violates K*L < 1 for L={c:g}")
    for idx, k in enumerate(k_values):
        params = _build_params(2, k, args, skills=[0.0, 0.0])
        t_star = args.t_star if args.t_star is not None else default_t_star(k)
        cfg = EnsembleConfig(params=params, m=args.m, t_star=t_star,
                             master_seed=derive_seed(args.seed, 0xD1, idx),
                             initial=InitialCondition.zero())
        result = run_ensemble(cfg)
        hist = make_histogram(result.samples[:, 0], args.bins)
        path = out / f"density_k_{_fmt(k)}.csv"
        write_histogram_csv(hist, path, _echo(
            args, k=k, c=c, rho1=0.0, n=2, m=args.m, t_star=t_star,
            bins=args.bins, score_kind=args.score_kind))
        print(f"wrote {path} ({args.m} samples)")
    return 0


# -- scans ---------------------------------------------------------------------


def cmd_bias_scan(args) -> int:
    out = _out_dir(args)
    c = _link_scale(args)
    grid = np.linspace(-1.0, 1.0, args.points)
    t_star = args.t_star if args.t_star is not None else default_t_star(args.k)
    lines = []
    header = _echo(args, k=args.k, c=c, n=2, m=args.m, t_star=t_star,
                   points=args.points, score_kind=args.score_kind)
    lines.append(format_header(header))
    lines.append("rho1,b2rho1,mean_X1,b_2meanX1,mean_b2X1,stderr")
    link = LinkFunction.logistic(c)
    for idx, rho1 in enumerate(grid):
        params = _build_params(2, args.k, args, skills=[float(rho1), -float(rho1)])
        cfg = EnsembleConfig(params=params, m=args.m, t_star=t_star,
                             master_seed=derive_seed(args.seed, 0xB5, idx),
                             initial=InitialCondition.zero())
        result = run_ensemble(cfg)
        x1 = result.samples[:, 0]
        mean_x1 = float(x1.mean())
        stderr = float(x1.std()) / math.sqrt(args.m)
        row = [float(rho1), link.eval_scalar(2.0 * float(rho1)), mean_x1,
               link.eval_scalar(2.0 * mean_x1),
               float(link.eval_array(2.0 * x1).mean()), stderr]
        lines.append(",".join(repr(v) for v in row))
    path = out / "bias_scan.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path} ({args.points} points)")
    return 0


def cmd_k_scan(args) -> int:
    out = _out_dir(args)
    c = _link_scale(args)
    ks = np.geomspace(args.k_min, args.k_max, args.points)
    lines = [format_header(_echo(args, rho1=args.rho1_value, c=c, n=2, m=args.m,
                                 points=args.points, k_min=args.k_min,
                                 k_max=args.k_max, score_kind=args.score_kind))]
    lines.append("K,mean_abs_dev,stderr,t_star_used")
    for idx, k in enumerate(ks):
        params = _build_params(2, float(k), args,
                               skills=[args.rho1_value, -args.rho1_value])
        t_star = args.t_star if args.t_star is not None else default_t_star(float(k))
        cfg = EnsembleConfig(params=params, m=args.m, t_star=t_star,
                             master_seed=derive_seed(args.seed, 0x5C, idx),
                             initial=InitialCondition.zero())
        result = run_ensemble(cfg)
        dev = np.abs(result.samples[:, 0] - args.rho1_value)
        lines.append(",".join([repr(float(k)), repr(float(dev.mean())),
                               repr(float(dev.std()) / math.sqrt(args.m)),
                               str(t_star)]))
    path = out / "k_scan.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path} ({args.points} points)")
    return 0


# -- verification and reachability ----------------------------------------------


def cmd_verify(args) -> int:
    out = _out_dir(args)
    only = args.only if args.only else None
    try:
        reports = verify_mod.run_default_checks(args.seed, only=only)
    except KeyError as exc:
        return _fail(str(exc))
    path = out / "verify_report.csv"
    path.write_text(verify_mod.report_csv(reports, args.seed), encoding="utf-8")
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {rep.name}: observed={rep.observed:.6g} "
              f"{rep.relation} bound={rep.bound_or_target:.6g} "
              f"tol={rep.tolerance:.3g} (samples={rep.samples_used})")
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(reports)} checks passed; report at {path}")
    return 0


def cmd_reach(args) -> int:
    out = _out_dir(args)
    start_entries = [float(tok) for tok in args.start.split(",")]
    n = len(start_entries)
    targets = []
    for spec_str in args.target:
        lo, hi = (float(tok) for tok in spec_str.split(","))
        targets.append((lo, hi))
    if len(targets) != n - 1:
        return _fail(f"need {n - 1} --target boxes for {n} players")
    c = _link_scale(args)
    if 2.0 * args.k * c >= 1.0:
        return _fail(f"path construction needs 2*K*L < 1 "
                     f"(got 2KL = {2.0 * args.k * c:g})")
    params = _build_params(n, args.k, args)
    try:
        start = RatingVector(np.array(start_entries))
    except ValueError as exc:
        return _fail(str(exc))
    plan = find_path_nd(start, targets, params)
    terminal = plan.replay(params)
    path = out / "path_plan.txt"
    path.write_text(plan.to_text(), encoding="utf-8")
    print(f"plan length: {len(plan.events)} matches")
    print("terminal state:", ",".join(f"{v:.6f}" for v in terminal.entries))
    print(f"in target: {plan.in_target(terminal)}")
    print(f"path log-probability: {plan.log_probability(params):.6f}")
    print(f"wrote {path}")
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    if args.skills:
        skills = [float(tok) for tok in args.skills.split(",")]
        n = len(skills)
    else:
        n = args.n
        skills = [args.rho1_value, -args.rho1_value] if n == 2 else None
    params = _build_params(n, args.k, args, skills=skills)
    t_star = args.t_star if args.t_star is not None else default_t_star(args.k)
    cfg = EnsembleConfig(params=params, m=args.m, t_star=t_star,
                         master_seed=args.seed, initial=InitialCondition.zero())
    result = run_ensemble(cfg)
    path = out / "samples.csv"
    write_samples_csv(result.samples, path,
                      {"seed": args.seed, "t_star": t_star, "m": args.m,
                       "k": args.k, "n": n})
    print(f"wrote {path}")
    print("mean:", ",".join(f"{v:.6f}" for v in result.summary.mean))
    print("mean_abs_dev:", ",".join(f"{v:.6f}" for v in result.summary.mean_abs_dev))
    print(f"exp_moment(a={result.summary.exp_moment_scale:g}): "
          f"{result.summary.exp_moment:.6f}")
    return 0


# -- parser ----------------------------------------------------------------------


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED,
                   help="master seed (default 0x454C4F)")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--t-star", type=int, default=None,
                   help="burn-in steps (default: max(200, ceil(10/K)))")
    p.add_argument("--c", type=float, default=None, help="logistic link scale")
    p.add_argument("--L", type=float, default=None,
                   help="link Lipschitz constant (synonym of --c for the logistic)")
    p.add_argument("--score-kind", choices=["binary", "three_point"],
                   default="binary")
    p.add_argument("--p-tie", type=float, default=0.0,
                   help="tie probability for three_point scores")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elodyn", description="Elo chain experiments and checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density-rho", help="equilibrium histograms across rho1")
    _common_flags(p)
    p.add_argument("--m", type=int, default=1_000_000)
    p.add_argument("--k", type=float, default=0.4)
    p.add_argument("--rho1", type=float, action="append",
                   help="override the rho1 grid (repeatable)")
    p.add_argument("--bins", type=int, default=400)
    p.set_defaults(func=cmd_density_rho)

    p = sub.add_parser("density-k", help="equilibrium histograms across K")
    _common_flags(p)
    p.add_argument("--m", type=int, default=1_000_000)
    p.add_argument("--k", type=float, action="append",
                   help="override the K grid (repeatable)")
    p.add_argument("--bins", type=int, default=400)
    p.set_defaults(func=cmd_density_k)

    p = sub.add_parser("bias-scan", help="mean rating vs true skill")
    _common_flags(p)
    p.add_argument("--m", type=int, default=10_000)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_bias_scan)

    p = sub.add_parser("k-scan", help="mean |X0 - rho0| across a K grid")
    _common_flags(p)
    p.add_argument("--m", type=int, default=20_000)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--k-min", type=float, default=1e-3)
    p.add_argument("--k-max", type=float, default=1.0)
    p.add_argument("--rho1", dest="rho1_value", type=float, default=0.5)
    p.set_defaults(func=cmd_k_scan)

    p = sub.add_parser("verify", help="run the check suite")
    _common_flags(p)
    p.add_argument("--only", action="append",
                   help="run only the named check (repeatable)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reach", help="construct and replay a forced-score path")
    _common_flags(p)
    p.add_argument("--k", type=float, default=0.4)
    p.add_argument("--start", default="0,0",
                   help="comma-separated start ratings (zero-sum)")
    p.add_argument("--target", action="append", required=True,
                   help="target interval lo,hi per free coordinate (repeatable)")
    p.set_defaults(func=cmd_reach)

    p = sub.add_parser("simulate", help="run one ensemble and dump samples")
    _common_flags(p)
    p.add_argument("--m", type=int, default=10_000)
    p.add_argument("--k", type=float, default=0.4)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--rho1", dest="rho1_value", type=float, default=0.0)
    p.add_argument("--skills", default=None,
                   help="comma-separated true skills (overrides --n/--rho1)")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
