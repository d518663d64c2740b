"""Command-line driver.

Commands
--------
verify   seeded dual-route checks of every identity, JSON report
psc      additive subspace correction for a decomposition file
ssc      successive subspace correction for a decomposition file
pcg      preconditioned conjugate gradients, CSV trace
auxgrid  condition number study of the auxiliary grid preconditioner

The exit status is 0 exactly when every check passes.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

log = logging.getLogger("auxsolve")


def _dims(text):
    try:
        dims = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    if not dims or min(dims) < 3:
        raise argparse.ArgumentTypeError("every dimension must be an integer >= 3")
    return dims


def _levels(text):
    try:
        levels = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    if not levels or min(levels) < 2:
        raise argparse.ArgumentTypeError("every level must be an integer >= 2")
    return levels


def _positive(text):
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise SystemExit(f"cannot write {out}: {exc}")


def _finish(reports, out) -> int:
    from .verify import failures, report_json

    _emit(report_json(reports), out)
    bad = failures(reports)
    for line in bad:
        log.error("FAILED %s", line)
    return 1 if bad else 0


def cmd_verify(args) -> int:
    from .verify import DEFAULT_TOL, run_verify

    reports = run_verify(args.seed, args.dims, args.tol or DEFAULT_TOL)
    return _finish(reports, args.out)


def _decomposition(args):
    from .subspace import load_decomposition

    try:
        return load_decomposition(args.decomposition)
    except (OSError, KeyError, ValueError) as exc:
        raise SystemExit(f"cannot read decomposition {args.decomposition}: {exc}")


def cmd_psc(args) -> int:
    from .subspace import build_psc, psc_eigen_identity
    from .verify import DEFAULT_TOL, _report

    d = _decomposition(args)
    tol = args.tol or DEFAULT_TOL
    n = d.A.dim
    B = build_psc(d)
    diff = np.max(np.abs(B - d.Pi @ d.R_tilde @ d.Pi.T)) / (1.0 + np.max(np.abs(B)))
    e = psc_eigen_identity(d)
    reports = [
        _report("psc_block_form", diff, 0.0, 1e-12, args.seed, [n]),
        _report("lions_identity/lambda_min", e.lambda_min_lhs, e.lambda_min_rhs, tol, args.seed, [n]),
        _report("lions_identity/lambda_max", e.lambda_max_lhs, e.lambda_max_rhs, tol, args.seed, [n]),
    ]
    log.info("kappa(B_PSC A) = %.6g", e.lambda_max_lhs / e.lambda_min_lhs)
    return _finish(reports, args.out)


def cmd_ssc(args) -> int:
    from .subspace import build_ssc, xz_constants
    from .verify import DEFAULT_TOL, _report

    d = _decomposition(args)
    tol = args.tol or DEFAULT_TOL
    n = d.A.dim
    ssc = build_ssc(d, reverse=args.reverse)
    x = xz_constants(d, reverse=args.reverse, tol=tol)
    reports = [
        _report("ssc_block_form", ssc.discrepancy, 0.0, 1e-10, args.seed, [n]),
        _report("xu_zikatanov/c1", x.norm_sq_direct, 1.0 - 1.0 / x.c1, tol, args.seed, [n]),
        _report("xu_zikatanov/c0", x.norm_sq_direct, 1.0 - 1.0 / (1.0 + x.c0), tol, args.seed, [n]),
    ]
    log.info("c0 = %.6g, c1 = %.6g, |I - BA|_A^2 = %.6g", x.c0, x.c1, x.norm_sq_direct)
    return _finish(reports, args.out)


def cmd_pcg(args) -> int:
    from .errors import AuxSolveError
    from .iterative import pcg_solve
    from .linalg import read_matrix

    try:
        A = read_matrix(args.matrix)
        B = read_matrix(args.precond) if args.precond else np.eye(A.shape[0])
        if args.rhs:
            f = read_matrix(args.rhs).ravel()
        else:
            f = A @ np.random.default_rng(args.seed).standard_normal(A.shape[0])
    except (OSError, ValueError) as exc:
        raise SystemExit(f"cannot read input: {exc}")
    try:
        trace = pcg_solve(A, B, f, tol=args.tol or 1e-10, max_iter=args.max_iter)
    except AuxSolveError as exc:
        log.error("%s", exc)
        return 1
    _emit(trace.to_csv(), args.out)
    log.info("%d iterations, converged=%s", trace.iterations, trace.converged)
    return 0 if trace.converged else 1


def cmd_auxgrid(args) -> int:
    from .errors import MeshError
    from .fem.auxgrid import kappa_study, write_study
    from .fem.mesh import mesh_family, read_triangle

    if args.mesh_dir:
        files = sorted(Path(args.mesh_dir).glob("*.node"))
        if not files:
            raise SystemExit(f"no .node files in {args.mesh_dir}")
        try:
            meshes = sorted((read_triangle(p) for p in files), key=lambda m: m.n_nodes)
        except MeshError as exc:
            raise SystemExit(str(exc))
    else:
        meshes = mesh_family(args.levels, warp=args.warp)
    if len(meshes) < 2:
        log.warning("single level: no growth ratios to check")
    elif len(meshes) < 3:
        log.warning("fewer than three levels: the growth trend is not established")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        rows = kappa_study(meshes, alpha=args.alpha, mode=args.mode, b0=args.b0,
                           grid_bc=args.grid_bc)
    _emit(write_study(rows), args.out)
    ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
    bad = [x for x in ratios if x > args.gate]
    for r in rows:
        log.info("h=%.5g dim=%d kappa=%.6g ratio=%s", r["h"], r["dim"], r["kappa_BA"],
                 "-" if r["ratio"] is None else f"{r['ratio']:.4f}")
    if bad:
        log.error("growth ratio gate %.3g exceeded: %s", args.gate,
                  ", ".join(f"{x:.4f}" for x in bad))
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="auxsolve", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--tol", type=_positive, default=None)
        sp.add_argument("--out", default=None, help="output file (default: stdout)")

    sp = sub.add_parser("verify", help="run the seeded verification suite")
    common(sp)
    sp.add_argument("--dims", type=_dims, default=[4, 6])
    sp.set_defaults(func=cmd_verify)

    for name, func in (("psc", cmd_psc), ("ssc", cmd_ssc)):
        sp = sub.add_parser(name, help=f"{name.upper()} checks for a decomposition file")
        common(sp)
        sp.add_argument("decomposition", help="JSON decomposition description")
        if name == "ssc":
            sp.add_argument("--reverse", action="store_true", help="sweep the pieces backwards")
        sp.set_defaults(func=func)

    sp = sub.add_parser("pcg", help="preconditioned conjugate gradients")
    common(sp)
    sp.add_argument("matrix")
    sp.add_argument("--precond", default=None)
    sp.add_argument("--rhs", default=None)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.set_defaults(func=cmd_pcg)

    sp = sub.add_parser("auxgrid", help="auxiliary grid condition number study")
    common(sp)
    sp.add_argument("--mesh-dir", default=None, help="directory of Triangle .node/.ele files")
    sp.add_argument("--levels", type=_levels, default=[8, 16, 32, 64])
    sp.add_argument("--warp", type=float, default=0.05)
    sp.add_argument("--alpha", type=float, default=0.8)
    sp.add_argument("--mode", choices=["aux", "jacobi", "exact"], default="aux")
    sp.add_argument("--b0", choices=["exact", "diagonal"], default="exact")
    sp.add_argument("--grid-bc", choices=["dirichlet", "natural"], default="dirichlet")
    sp.add_argument("--gate", type=_positive, default=1.15)
    sp.set_defaults(func=cmd_auxgrid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
