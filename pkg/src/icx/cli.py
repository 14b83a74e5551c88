"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 failed assertion or bound,
3 I/O error. ``ICX_LOG`` selects log verbosity (error, info, debug).
"""

import argparse
import csv
import logging
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .codec import build_code, decode_user, encode, load_code, save_code
from .errors import (BoundViolation, ICXError, NoFeasibleRank, NotConverged, OffSubspaceInput,
                     ValidationError)
from .experiments import CASES, ExperimentConfig, reproduce_5a, sweep_side_info, sweep_subspace_dim, write_csv
from .instance import generate_random, load_instance, save_instance, stack_system
from .numerics import pseudo_inverse
from .oracle import certify
from .solver import SolverOptions, solve_pair, solve_unaware

log = logging.getLogger("icx")

EXIT_OK, EXIT_INVALID, EXIT_ASSERT, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text):
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _case_list(text):
    cases = tuple(c for c in text.split(",") if c)
    bad = [c for c in cases if c not in CASES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown case(s) {bad}; choose from {', '.join(CASES)}")
    return cases


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return v


def _solver_flags(p, eps=1e-8):
    p.add_argument("--eps", type=_positive_float, default=eps, help="feasibility threshold")
    p.add_argument("--tmax", type=_positive_int, default=1000, help="iterations per restart")
    p.add_argument("--restarts", type=_positive_int, default=10, help="random restarts per rank")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (printed when omitted)")


def build_parser():
    p = _Parser(prog="icx", description="Subspace-aware real-field index codes.")
    p.add_argument("--version", action="version", version=f"icx {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a random instance")
    g.add_argument("--n", type=_positive_int, default=20)
    g.add_argument("--u", type=_positive_int, default=20)
    g.add_argument("--v", type=_positive_int, default=5)
    g.add_argument("--m", type=int, default=15)
    g.add_argument("--d", type=_positive_int, default=None, help="subspace dimension (omit for none)")
    g.add_argument("--side", choices=("USI", "CSI"), default="USI")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("-o", "--out", required=True)

    s = sub.add_parser("solve", help="find a short index code for an instance")
    s.add_argument("-i", "--instance", required=True)
    s.add_argument("-o", "--out", help="code file to write")
    s.add_argument("--unaware", action="store_true", help="ignore the subspace basis")
    _solver_flags(s)

    b = sub.add_parser("bounds", help="solve and print the bound certificate")
    b.add_argument("-i", "--instance", required=True)
    b.add_argument("--unaware", action="store_true")
    b.add_argument("--verbose", action="store_true")
    _solver_flags(b)

    e = sub.add_parser("encode", help="encode a source vector with a code file")
    e.add_argument("--code", required=True)
    e.add_argument("--source", required=True, help="single-column CSV with x (or w with --latent)")
    e.add_argument("--latent", action="store_true", help="source holds the latent coordinates w")
    e.add_argument("-i", "--instance", help="instance used to check x lies in the subspace")
    e.add_argument("--project", action="store_true", help="project an off-subspace x instead of failing")
    e.add_argument("-o", "--out", required=True)

    d = sub.add_parser("decode", help="decode one user's requests")
    d.add_argument("--code", required=True)
    d.add_argument("--user", type=int, required=True)
    d.add_argument("--side-info", required=True, help="single-column CSV with S_j x")
    d.add_argument("--received", required=True, help="single-column CSV with y")
    d.add_argument("-o", "--out", required=True)

    for name, helptext in (("sweep-d", "sweep the subspace dimension"),
                           ("sweep-m", "sweep the side information size")):
        w = sub.add_parser(name, help=helptext)
        w.add_argument("--n", type=_positive_int, default=20)
        w.add_argument("--u", type=_positive_int, default=20)
        w.add_argument("--v", type=_positive_int, default=5)
        if name == "sweep-d":
            w.add_argument("--m", type=int, default=15)
            w.add_argument("--d-list", type=_int_list, default=tuple(range(2, 20)))
        else:
            w.add_argument("--d", type=_positive_int, default=15)
            w.add_argument("--m-list", type=_int_list, default=(0, 5, 10, 15))
        w.add_argument("--trials", type=_positive_int, default=20)
        w.add_argument("--cases", type=_case_list, default=CASES)
        w.add_argument("--jobs", type=_positive_int, default=1)
        w.add_argument("--no-timing", action="store_true", help="omit wall times for byte-stable output")
        w.add_argument("--figure", help="figure path (default: CSV path with .png)")
        w.add_argument("--no-figure", action="store_true")
        w.add_argument("-o", "--out", required=True)
        _solver_flags(w)

    r = sub.add_parser("reproduce-5a", help="rerun the four-user comparison example")
    r.add_argument("--eps", type=_positive_float, default=1e-10)
    r.add_argument("--tmax", type=_positive_int, default=1000)
    r.add_argument("--restarts", type=_positive_int, default=10)
    r.add_argument("--seed", type=int, default=0)
    return p


def _read_vector(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and r[0].strip()]
    try:
        vals = [float(r[0]) for r in rows]
    except ValueError:
        raise ValidationError([f"{path}: non-numeric entry"]) from None
    return np.array(vals)


def _write_vector(path, vec):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for v in np.asarray(vec).ravel():
            fh.write(f"{v:.17g}\n")


def _seed(args, err):
    if args.seed is None:
        args.seed = secrets.randbelow(2**31)
        print(f"seed: {args.seed}", file=err)
    return args.seed


def _opts(args):
    return SolverOptions(eps=args.eps, t_max=args.tmax, restarts=args.restarts, seed=args.seed)


def _cmd_gen(args, out, err):
    seed = _seed(args, err)
    inst = generate_random(args.n, args.u, args.v, args.m, args.d, args.side, seed)
    save_instance(inst, args.out)
    print(f"wrote {args.out}", file=out)


def _cmd_solve(args, out, err):
    inst = load_instance(args.instance)
    stack_system(inst)
    _seed(args, err)
    opts = _opts(args)
    if args.unaware or not inst.aware:
        inst = inst.unaware()
        res = solve_unaware(inst, opts)
    else:
        un, res = solve_pair(inst, opts)
        print(f"unaware length: {un.length}", file=out)
    print(f"length: {res.length}", file=out)
    if res.no_transmission:
        print("note: every request is decodable from side information alone", file=out)
    print(f"residual: {res.solution.residual:.3e}", file=out)
    if args.out:
        save_code(build_code(res, stack_system(inst)), args.out)
        print(f"wrote {args.out}", file=out)


def _cmd_bounds(args, out, err):
    inst = load_instance(args.instance)
    stack_system(inst)
    _seed(args, err)
    opts = _opts(args)
    if args.unaware:
        inst = inst.unaware()
    un, aw = solve_pair(inst, opts)
    un_cert = certify(un, stack_system(inst.unaware()), opts.eps)
    if inst.aware:
        cert = certify(aw, stack_system(inst), opts.eps, l_unaware=un.length,
                       unaware_optimal=un_cert.optimal)
        print(f"unaware_length: {un.length}", file=out)
    else:
        cert = un_cert
    for line in cert.lines(verbose=args.verbose):
        print(line, file=out)


def _cmd_encode(args, out, err):
    code = load_code(args.code)
    v = _read_vector(args.source)
    if args.latent:
        y = encode(code, w=v)
    else:
        if args.instance:
            inst = load_instance(args.instance)
            T = stack_system(inst).T
            proj = T @ (pseudo_inverse(T) @ v)
            gap = float(np.linalg.norm(v - proj))
            if gap > 1e-8 * max(float(np.linalg.norm(v)), 1e-300):
                if not args.project:
                    raise OffSubspaceInput(f"source is {gap:.3e} away from the subspace (use --project)")
                print(f"projection residual: {gap:.3e}", file=out)
                v = proj
        y = encode(code, x=v)
    _write_vector(args.out, y)
    print(f"wrote {args.out} ({y.size} symbols)", file=out)


def _cmd_decode(args, out, err):
    code = load_code(args.code)
    if not 0 <= args.user < len(code.decoders):
        raise ValidationError([f"--user {args.user} outside [0, {len(code.decoders)})"])
    xh = decode_user(code, args.user, _read_vector(args.side_info), _read_vector(args.received))
    _write_vector(args.out, xh)
    print(f"wrote {args.out} ({xh.size} packets)", file=out)


def _cmd_sweep(args, out, err):
    seed = _seed(args, err)
    opts = _opts(args)
    if args.command == "sweep-d":
        cfg = ExperimentConfig(n=args.n, u=args.u, v_per_user=args.v, m_per_user=args.m,
                               trials=args.trials, seed=seed, solver=opts, sweep_values=args.d_list,
                               cases=args.cases, timing=not args.no_timing, jobs=args.jobs)
        cfg.check("d")
        table = sweep_subspace_dim(cfg)
    else:
        cfg = ExperimentConfig(n=args.n, u=args.u, v_per_user=args.v, d=args.d, trials=args.trials,
                               seed=seed, solver=opts, sweep_values=args.m_list, cases=args.cases,
                               timing=not args.no_timing, jobs=args.jobs)
        cfg.check("m")
        table = sweep_side_info(cfg)
    write_csv(table, args.out)
    print(f"wrote {args.out}", file=out)
    if not args.no_figure:
        from .plotting import plot_table
        fig = args.figure or str(Path(args.out).with_suffix(".png"))
        plot_table(table, fig)
        print(f"wrote {fig}", file=out)


def _cmd_reproduce(args, out, err):
    rep = reproduce_5a(eps=args.eps, t_max=args.tmax, restarts=args.restarts, seed=args.seed)
    for line in rep.lines():
        print(line, file=out)
    if not rep.ok:
        raise AssertionError("; ".join(rep.failures))


COMMANDS = {"gen": _cmd_gen, "solve": _cmd_solve, "bounds": _cmd_bounds, "encode": _cmd_encode,
            "decode": _cmd_decode, "sweep-d": _cmd_sweep, "sweep-m": _cmd_sweep,
            "reproduce-5a": _cmd_reproduce}


def _setup_logging():
    level = os.environ.get("ICX_LOG", "error").lower()
    logging.basicConfig(level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
                        .get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def run(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    except (BoundViolation, NoFeasibleRank, NotConverged, AssertionError) as exc:
        print(f"assertion failed: {exc}", file=err)
        return EXIT_ASSERT
    except ICXError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=err)
        return EXIT_IO
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
