"""``blockcert`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bound_report
from .errors import BlockCertError
from .fixedpoint import FixedPointConfig, OmegaQuery, solve_fixed_point
from .harness import PRESETS, EnsembleSpec, generate, preset, run_experiment
from .inner_solver import InnerOptions, verify_s_star
from .io import read_matrix, read_vector, to_json, write_json, write_matrix, write_vector
from .recovery import RecoveryOptions, RecoveryProblem

STRATEGY_ALIASES = {"bisect": "bisection"}


def _globals(parser, suppress=False):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--seed", type=int, **({"default": 0} if not suppress else kw))
    parser.add_argument("--threads", type=int, **({"default": 1} if not suppress else kw))
    parser.add_argument("--tol", type=float, **({"default": None} if not suppress else kw))
    parser.add_argument("--out", metavar="DIR", **({"default": None} if not suppress else kw))
    parser.add_argument("--config", metavar="FILE", help="JSON file of option defaults",
                        **({"default": None} if not suppress else kw))


def _emit(args, name, payload):
    text = to_json(payload, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / f"{name}.json", payload)


def cmd_generate(args):
    spec = EnsembleSpec(args.kind, args.m, args.n, args.p, args.seed, not args.no_normalize)
    A = generate(spec)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / args.name
    write_matrix(path, A, spec.n)
    print(to_json({"matrix": str(path), "m": spec.m, "n": spec.n, "p": spec.p, "seed": spec.seed}))


def cmd_verify(args):
    A, n = read_matrix(args.matrix, args.n)
    opts = InnerOptions(tol=args.tol or 1e-5)
    res = verify_s_star(A, n, opts, qr=not args.no_qr, threads=args.threads)
    _emit(args, "verify", res.to_dict())


def cmd_omega(args):
    A, n = read_matrix(args.matrix, args.n)
    strategy = STRATEGY_ALIASES.get(args.strategy, args.strategy)
    cfg = FixedPointConfig(tol=args.tol or 1e-5, eta_lo=args.eta_lo, eta_hi=args.eta_hi, strategy=strategy)
    trace = solve_fixed_point(OmegaQuery(A, n, args.s, args.target), cfg)
    _emit(args, "omega", trace.to_dict())


def cmd_bounds(args):
    A, n = read_matrix(args.matrix, args.n)
    noise = args.mu if args.variant in ("bsds", "bslasso") else args.eps
    if noise is None:
        raise SystemExit(f"--{'mu' if args.variant != 'bsbp' else 'eps'} is required for {args.variant}")
    fp = FixedPointConfig(tol=args.tol or 1e-5)
    rep = bound_report(A, n, args.k, args.variant, noise, args.kappa, fp=fp,
                       rip_trials=args.rip_trials, seed=args.seed)
    _emit(args, "bounds", rep.to_dict())


def cmd_recover(args):
    A, n = read_matrix(args.matrix, args.n)
    y = read_vector(args.y)
    opts = RecoveryOptions(strict=False)
    if args.tol:
        opts.obj_tol = opts.kkt_tol = args.tol
    res = RecoveryProblem(A, y, n, args.variant, eps=args.eps or 0.0, mu=args.mu).solve(opts)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_vector(out / "xhat.csv", res.xhat)
    _emit(args, "recover", res.to_dict())
    if not res.converged:
        return 3


def cmd_report(args):
    overrides = {"seeds": tuple(range(args.seed, args.seed + args.repeat)), "threads": args.threads,
                 "out_dir": args.out or "results"}
    if args.tol:
        overrides["tol"] = args.tol
    if args.ms:
        overrides["ms"] = tuple(args.ms)
    if args.ks:
        overrides["ks"] = tuple(args.ks)
    if args.rip_trials is not None:
        overrides["rip_trials"] = args.rip_trials
    cfg = preset(args.preset, full=args.full, **overrides)
    res = run_experiment(cfg)
    print(to_json({"csv": res["csv"], "json": res["json"], "rows": res["rows"]}, indent=2))


def cmd_oracle(args):
    from . import oracles

    A, n = read_matrix(args.matrix, args.n)
    cfg = oracles.OracleConfig(direction_samples=args.directions, restarts=args.restarts, seed=args.seed)
    if args.quantity == "omega":
        value = oracles.oracle_omega(A, n, args.s, args.target, cfg)
    elif args.quantity == "s_star":
        value = oracles.oracle_s_star(A, n, cfg)
    elif args.quantity == "rho":
        value = oracles.oracle_rho(A, n, args.s, cfg)
    else:
        Q = A if args.target == "omega2" else A.T @ A
        which = "2" if args.target == "omega2" else "binf"
        value = oracles.oracle_f_s(Q, n, args.s, args.eta, which, cfg)
    _emit(args, "oracle", {"quantity": args.quantity, "value": value})


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="blockcert", description=__doc__)
    root.add_argument("--version", action="version", version=__version__)
    root.add_argument("-v", "--verbose", action="count", default=0)
    _globals(root)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    sub = root.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=fn)
        return p

    def matrix_args(p):
        p.add_argument("--matrix", required=True, help="CSV matrix with a sidecar .json descriptor")
        p.add_argument("--n", type=int, default=None, help="block length when no descriptor exists")

    p = add("generate", cmd_generate, "draw a random sensing matrix")
    p.add_argument("--kind", choices=("gaussian", "bernoulli"), default="gaussian")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--name", default="A.csv")

    p = add("verify", cmd_verify, "certify s_* and k_*")
    matrix_args(p)
    p.add_argument("--no-qr", action="store_true")

    p = add("omega", cmd_omega, "lower-bound omega via the fixed-point engine")
    matrix_args(p)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--target", choices=("omega2", "omegabinf"), default="omega2")
    p.add_argument("--strategy", choices=("naive", "bisect", "bisection", "hybrid"), default="hybrid")
    p.add_argument("--eta-lo", type=float, default=0.1)
    p.add_argument("--eta-hi", type=float, default=10.0)

    p = add("bounds", cmd_bounds, "error bounds for one (k, variant)")
    matrix_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--variant", choices=("bsbp", "bsds", "bslasso"), default="bsbp")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--rip-trials", type=int, default=0)

    p = add("recover", cmd_recover, "solve a recovery program")
    matrix_args(p)
    p.add_argument("--y", required=True, help="measurement vector CSV")
    p.add_argument("--variant", choices=("bsbp", "bsds", "bslasso", "noisefree"), required=True)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)

    p = add("report", cmd_report, "run a table preset")
    p.add_argument("--preset", choices=PRESETS, required=True)
    p.add_argument("--full", action="store_true", help="all rows of the table")
    p.add_argument("--repeat", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--ms", type=int, nargs="+")
    p.add_argument("--ks", type=int, nargs="+")
    p.add_argument("--rip-trials", type=int, default=None)

    p = add("oracle", cmd_oracle, "brute-force reference values (tiny matrices only)")
    matrix_args(p)
    p.add_argument("quantity", choices=("f_s", "omega", "s_star", "rho"))
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--target", choices=("omega2", "omegabinf"), default="omega2")
    p.add_argument("--directions", type=int, default=32)
    p.add_argument("--restarts", type=int, default=8)
    return root


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    defaults = {k.replace("-", "_"): v for k, v in json.loads(Path(known.config).read_text()).items()}
    parser.set_defaults(**defaults)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return args.func(args) or 0
    except BlockCertError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
