"""Command-line entry point.

Every subcommand prints a single JSON document on stdout; progress and
diagnostics go to stderr. Exit codes: 0 success (for ``certify``: unique),
1 not unique or failed self-test, 2 indeterminate, 64 usage error, 65 bad
input data, 70 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from certilab import __version__
from certilab.linalg import read_matrix_csv, write_matrix_csv
from certilab.objectives import CLI_NAMES, InfeasiblePointError, make_objective

EX_OK = 0
EX_NOT_UNIQUE = 1
EX_INDETERMINATE = 2
EX_USAGE = 64
EX_DATAERR = 65
EX_SOFTWARE = 70


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with 64 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def read_signal(path):
    """Signal from CSV: ``(vector, image_shape or None)``.

    A one-column file is a vector; any other shape is an image, flattened
    column-major.
    """
    M = read_matrix_csv(path)
    if M.shape[1] == 1:
        return M[:, 0].copy(), None
    return M.reshape(-1, order="F"), M.shape


def _objective(case: str, x, shape):
    case = case.lower()
    if case.endswith("-2d"):
        if shape is None:
            side = int(round(math.sqrt(x.size)))
            if side * side != x.size:
                raise DataError(f"{case} needs an image; a vector of length {x.size} is not square")
            shape = (side, side)
        return make_objective(case, image_shape=shape)
    return make_objective(case, x.size)


def _parse_shape(text):
    if text is None:
        return None
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--shape expects 'rows,cols', got {text!r}")
    return r, c


# ---------------------------------------------------------------------------
# subcommands


def cmd_certify(args) -> int:
    from certilab.certify import (INDETERMINATE, UNIQUE, certify_general,
                                  certify_specialized)
    A = read_matrix_csv(args.matrix)
    x, shape = read_signal(args.signal)
    if A.shape[1] != x.size:
        raise DataError(f"matrix has {A.shape[1]} columns but the signal has {x.size} entries")
    spec = _objective(args.objective, x, shape)
    if args.method == "specialized":
        res = certify_specialized(A, spec, x, eps=args.eps)
    else:
        method = {"epsilon-lp": "epsilon_lp", "duality": "exact_duality"}[args.method]
        res = certify_general(A, spec, x, method=method, eps=args.eps)
    out = res.to_dict()
    out.update({"objective": args.objective, "m": A.shape[0], "n": A.shape[1]})
    _emit(out)
    if res.verdict == UNIQUE:
        return EX_OK
    return EX_INDETERMINATE if res.verdict == INDETERMINATE else EX_NOT_UNIQUE


def cmd_recover(args) -> int:
    from certilab.certify import recover
    A = read_matrix_csv(args.matrix)
    b = read_matrix_csv(args.rhs)
    if b.shape[1] != 1 or b.shape[0] != A.shape[0]:
        raise DataError(f"right-hand side must be a {A.shape[0]} x 1 column, got {b.shape}")
    shape = _parse_shape(args.shape)
    probe = np.zeros(A.shape[1])
    if shape is not None and shape[0] * shape[1] != probe.size:
        raise DataError(f"--shape {shape} does not match {probe.size} columns")
    spec = _objective(args.objective, probe, shape)
    x = recover(A, b[:, 0], spec)
    if args.out:
        if shape is not None or args.objective.endswith("-2d"):
            r, c = spec.image_shape
            write_matrix_csv(args.out, x.reshape((r, c), order="F"))
        else:
            write_matrix_csv(args.out, x)
    _emit({"objective": args.objective, "n": int(x.size), "out": args.out,
           "objective_value": float(np.abs(spec.D @ x).sum()),
           "residual_inf": float(np.abs(A @ x - b[:, 0]).max(initial=0.0)),
           "x": None if args.out else x.tolist()})
    return EX_OK


def cmd_statdim(args) -> int:
    from certilab.statdim import minimize_j
    x, shape = read_signal(args.signal)
    spec = _objective(args.objective, x, shape)
    if args.closed_form and not spec.separable:
        raise DataError(f"{args.objective} has no closed form; drop --closed-form")
    est = minimize_j(spec, x, k=args.samples, seed=args.seed,
                     closed_form=True if args.closed_form else None)
    out = est.to_dict()
    out.update({"objective": args.objective, "n": int(x.size), "seed": args.seed})
    _emit(out)
    return EX_OK


def cmd_gen_signal(args) -> int:
    from certilab.signals import SignalSpec, generate_signal, relative_sparsity
    spec = SignalSpec(args.structure.replace("-", "_"), args.rho, args.value_class,
                      args.n, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        x = generate_signal(spec)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if spec.structure == "gradient_sparse_2d":
        write_matrix_csv(args.out, x.reshape((spec.n, spec.n), order="F"))
    else:
        write_matrix_csv(args.out, x)
    _emit({"structure": spec.structure, "rho": spec.rho, "achieved_rho": relative_sparsity(spec, x),
           "class": spec.value_class, "n": spec.dim, "seed": args.seed, "out": args.out,
           "warnings": [str(w.message) for w in caught]})
    return EX_OK


def cmd_gen_matrix(args) -> int:
    from certilab.sensing import TomoGeometry, angles_for_rows, gaussian_matrix, tomo_matrix
    if args.kind == "gaussian":
        if args.n is None or args.m is None:
            raise UsageError("gaussian matrices need --n and --m")
        A = gaussian_matrix(args.m, args.n, args.seed)
        meta = {}
    else:
        if args.N is None:
            raise UsageError("tomographic matrices need --N")
        if args.angles is None and args.m is None:
            raise UsageError("tomographic matrices need --angles or --m")
        angles = args.angles if args.angles is not None else angles_for_rows(args.N, args.m, args.mask)
        geom = TomoGeometry(args.N, angles, args.mask)
        A = tomo_matrix(geom, args.kind.split("-", 1)[1], args.perturb_scale, args.seed)
        meta = {"N": args.N, "angles": int(angles), "mask": args.mask}
    write_matrix_csv(args.out, A)
    _emit({"kind": args.kind, "rows": A.shape[0], "cols": A.shape[1], "seed": args.seed,
           "out": args.out, **meta})
    return EX_OK


def cmd_phase(args) -> int:
    from certilab.phase import PhaseConfig, run_phase_experiment, write_csv, write_pgm
    try:
        cfg = PhaseConfig.from_json(args.config)
    except (TypeError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{args.config}: {exc}")

    def progress(done, total):
        print(f"\r{done}/{total} cells", end="", file=sys.stderr, flush=True)

    diagram = run_phase_experiment(cfg, workers=args.workers,
                                   progress=None if args.quiet else progress)
    if not args.quiet:
        print(file=sys.stderr)
    write_csv(diagram, args.out)
    if args.pgm:
        write_pgm(diagram, args.pgm, binary=args.binary_pgm, overlay_path=args.overlay)
    crossings = diagram.crossings()
    _emit({"out": args.out, "pgm": args.pgm, "overlay": args.overlay,
           "cells": len(diagram.cells),
           "wall_time_s": diagram.metadata.get("wall_time_s"),
           "crossings": {repr(r): _finite_or_none(v) for r, v in crossings.items()},
           "statdim": {repr(r): _finite_or_none(v) for r, v in diagram.statdim.items()}})
    return EX_OK


def cmd_selftest(args) -> int:
    from certilab import selftest
    per_case, systems = (20, 100) if args.quick else (200, 500)
    kernel_err = selftest.kernel_check()
    matches, total, _ = selftest.strict_feasibility_suite(systems, args.seed)
    reports = selftest.cross_agreement(per_case, args.seed)
    agreement = {}
    for case, r in reports.items():
        agreement[case] = {"instances": r.instances, "compared": r.compared,
                           "indeterminate": r.indeterminate,
                           "disagreements": len(r.disagreements), "unique": r.unique,
                           "recovery_failures": len(r.recovery_failures),
                           "max_recovery_error": r.max_recovery_error}
        print(f"{case}: {r.compared}/{r.instances} compared, "
              f"{len(r.disagreements)} disagreements, "
              f"{len(r.recovery_failures)} recovery failures", file=sys.stderr)
    ok = (kernel_err <= 1e-8 and matches == total
          and all(r.ok and r.sound for r in reports.values()))
    _emit({"ok": ok, "quick": args.quick, "kernel_max_error": kernel_err,
           "strict_feasibility": {"matches": matches, "total": total},
           "agreement": agreement})
    return EX_OK if ok else EX_NOT_UNIQUE


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="certilab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"certilab {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    c = sub.add_parser("certify", help="certify that a signal is the unique minimiser")
    c.add_argument("--matrix", required=True, help="measurement matrix CSV")
    c.add_argument("--signal", required=True, help="signal CSV (column or image)")
    c.add_argument("--objective", required=True, choices=CLI_NAMES)
    c.add_argument("--method", default="epsilon-lp",
                   choices=("epsilon-lp", "duality", "specialized"))
    c.add_argument("--eps", type=float, default=1e-8)
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("recover", help="solve the recovery LP for b = A x")
    r.add_argument("--matrix", required=True)
    r.add_argument("--rhs", required=True, help="measurements b as a one-column CSV")
    r.add_argument("--objective", required=True, choices=CLI_NAMES)
    r.add_argument("--shape", help="image shape 'rows,cols' for 2-D objectives")
    r.add_argument("--out", help="write the solution here instead of into the JSON")
    r.set_defaults(func=cmd_recover)

    s = sub.add_parser("statdim", help="estimate the statistical dimension of the descent cone")
    s.add_argument("--objective", required=True, choices=CLI_NAMES)
    s.add_argument("--signal", required=True)
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--closed-form", action="store_true",
                   help="require the exact formula (f1, f2, f3 only)")
    s.set_defaults(func=cmd_statdim)

    g = sub.add_parser("gen-signal", help="generate a sparse or gradient-sparse signal")
    g.add_argument("--structure", required=True,
                   choices=("sparse", "gradient-sparse-1d", "gradient-sparse-2d"))
    g.add_argument("--n", type=int, required=True, help="length, or image side for 2-D")
    g.add_argument("--rho", type=float, required=True)
    g.add_argument("--class", dest="value_class", default="real",
                   choices=("real", "nonnegative", "binary"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_signal)

    m = sub.add_parser("gen-matrix", help="generate a Gaussian or tomographic matrix")
    m.add_argument("--kind", required=True,
                   choices=("gaussian", "tomo-binary", "tomo-perturbed", "tomo-real"))
    m.add_argument("--n", type=int, help="columns (gaussian)")
    m.add_argument("--N", type=int, help="image side (tomography)")
    m.add_argument("--m", type=int, help="rows; for tomography the smallest angle count reaching it")
    m.add_argument("--angles", type=int, help="number of equidistant angles")
    m.add_argument("--mask", default="circle", choices=("circle", "rectangle"))
    m.add_argument("--perturb-scale", type=float, default=1e-3)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_gen_matrix)

    ph = sub.add_parser("phase", help="run a phase-transition sweep from a JSON config")
    ph.add_argument("--config", required=True)
    ph.add_argument("--out", required=True, help="diagram CSV")
    ph.add_argument("--pgm", help="gray-value image of the success rates")
    ph.add_argument("--overlay", help="second PGM with the statdim curve burned in")
    ph.add_argument("--binary-pgm", action="store_true", help="write P5 instead of P2")
    ph.add_argument("--workers", type=int, help="worker processes (default CERTILAB_THREADS)")
    ph.add_argument("--quiet", action="store_true")
    ph.set_defaults(func=cmd_phase)

    t = sub.add_parser("selftest", help="run the oracle cross-agreement suites")
    t.add_argument("--quick", action="store_true", help="small instance counts")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    from certilab.certify import PreconditionError
    from certilab.signals import ResampleNeeded
    from certilab.solver import InfeasibleError, SolverError
    from certilab.statdim import StatDimError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"certilab: error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (SolverError, StatDimError, ResampleNeeded) as exc:
        if isinstance(exc, InfeasibleError):
            print(f"certilab: data error: {exc}", file=sys.stderr)
            return EX_DATAERR
        print(f"certilab: numerical failure: {exc}", file=sys.stderr)
        return EX_SOFTWARE
    except (DataError, InfeasiblePointError, PreconditionError, ValueError, OSError) as exc:
        print(f"certilab: data error: {exc}", file=sys.stderr)
        return EX_DATAERR


if __name__ == "__main__":
    sys.exit(main())
