"""Command-line interface.

Exit codes: 0 success, 1 bound violated (or not verified), 2 usage error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, harness
from .bounds import CertificationError, relative_bound_curve
from .config import ConfigError, load_case, train_config
from .linalg import SingularMatrixError
from .model import LinearSystem, get_case, manufactured_suite
from .quadrature import QuadratureError
from .trainer import TrainConfig, load_checkpoint, save_checkpoint

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _resolve(target: str):
    """A suite case name or a TOML config path; returns (case, train hints)."""
    if target.endswith(".toml") or os.path.sep in target or os.path.isfile(target):
        if not os.path.isfile(target):
            raise UsageError(f"no such config file: {target}")
        return load_case(target)
    try:
        return get_case(target), {}
    except KeyError:
        raise UsageError(f"unknown case {target!r} (see 'odecert list')") from None


def _levels(text: str) -> tuple:
    try:
        levels = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return levels


def _norm(text: str):
    if text in ("inf", "Inf", "infinity"):
        return np.inf
    if text in ("1", "2"):
        return int(text)
    raise argparse.ArgumentTypeError("norm must be 1, 2 or inf")


def _with_norm(case, p):
    if p is None or not isinstance(case.problem, LinearSystem):
        return case
    return replace(case, problem=replace(case.problem, norm_p=p))


def _load_candidate(path: str):
    if not os.path.isfile(path):
        raise UsageError(f"no such checkpoint: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError) as e:
        raise UsageError(f"cannot read checkpoint {path}: {e}") from None


def _check_dims(case, candidate):
    if candidate.output_dim != case.problem.dim:
        raise UsageError(
            f"checkpoint has {candidate.output_dim} outputs but {case.name!r} needs {case.problem.dim}"
        )


def cmd_list(args) -> int:
    for case in manufactured_suite():
        print(f"{case.name:14s} {case.problem.kind:26s} {case.notes}")
    return EXIT_OK


def cmd_train(args) -> int:
    case, hints = _resolve(args.target)
    base = train_config(hints, TrainConfig())
    overrides = {k: v for k, v in (("epochs", args.epochs), ("seed", args.seed)) if v is not None}
    config = replace(base, **overrides)
    candidate, report = harness.train_case(case, config)
    out = args.out or f"{case.name}.ckpt.json"
    save_checkpoint(out, candidate, report, config, case.name)
    status = "diverged" if report.diverged else "ok"
    print(f"{case.name}: {len(report.loss_history)} epochs, best epoch {report.best_epoch}, "
          f"validation loss {report.best_validation_loss:.6g} ({status}) -> {out}")
    return EXIT_OK


def _certify(args):
    case, _ = _resolve(args.target)
    case = _with_norm(case, args.p)
    candidate, report, doc = _load_candidate(args.candidate)
    trained_for = doc.get("case")
    if trained_for is not None and trained_for != case.name:
        raise UsageError(f"checkpoint was trained for {trained_for!r}, not {case.name!r}")
    _check_dims(case, candidate)
    try:
        cert = harness.run_case(case, partition_levels=args.cells, eval_grid=args.eval_grid,
                                grid_per_cell=args.grid, candidate=candidate, report=report)
    except ValueError as e:
        if isinstance(e, (CertificationError, SingularMatrixError)):
            raise
        raise UsageError(str(e)) from None
    return case, cert


def _print_cert(cert):
    for n in cert.levels:
        print(f"  cells={n:<4d} eps={cert.profiles[n].epsilon:.6g} "
              f"final bound={cert.bound_curves[n].values[-1]:.6g}")
    if cert.max_error is not None:
        print(f"  max error={cert.max_error:.6g}")
    for note in cert.notes:
        print(f"  note: {note}")
    print(f"  verdict: {cert.verdict}")


def _check_relative(case):
    p = case.problem
    if p.kind != "first_order_constant":
        raise UsageError("--relative only applies to first-order constant-coefficient problems")
    if p.root.lam >= 0 or complex(p.u0) == 0:
        raise UsageError("--relative needs a negative root and a nonzero initial value")


def cmd_certify(args) -> int:
    if args.relative:
        _check_relative(_resolve(args.target)[0])
    case, cert = _certify(args)
    out = cert.write(args.out)
    if args.relative:
        coarse = cert.profiles[cert.levels[0]]
        curve = relative_bound_curve(case.problem, coarse, cert.times)
        with open(out / "relative_bound.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(curve.to_csv())
    print(f"{case.name}: certificate written to {out}")
    _print_cert(cert)
    return EXIT_VIOLATION if cert.verdict == harness.VIOLATION else EXIT_OK


def cmd_verify(args) -> int:
    case, _ = _resolve(args.target)
    if case.exact is None:
        raise UsageError(f"{case.name!r} has no exact solution to verify against")
    args.out = None
    _, cert = _certify(args)
    print(case.name)
    _print_cert(cert)
    return EXIT_OK if cert.verdict == harness.CERTIFIED_AND_VERIFIED else EXIT_VIOLATION


def cmd_suite(args) -> int:
    epochs = args.epochs if args.epochs is not None else (
        harness.QUICK_EPOCHS if args.quick else harness.FULL_EPOCHS)
    certs = harness.run_suite(args.out, epochs=epochs, seed=args.seed, levels=args.cells,
                              eval_grid=args.eval_grid, grid_per_cell=args.grid)
    sys.stdout.write(harness.summary_csv(certs))
    if args.out:
        print(f"results written to {args.out}")
    return EXIT_VIOLATION if any(c.verdict == harness.VIOLATION for c in certs) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odecert",
        description="Train neural ODE solutions and certify them with residual-based error bounds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="print the manufactured-solution cases").set_defaults(func=cmd_list)

    p = sub.add_parser("train", help="train a candidate network")
    p.add_argument("target", help="suite case name or TOML config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="checkpoint path (default CASE.ckpt.json)")
    p.set_defaults(func=cmd_train)

    def certify_opts(p):
        p.add_argument("target", help="suite case name or TOML config")
        p.add_argument("--candidate", required=True, help="checkpoint from 'train'")
        p.add_argument("--cells", type=_levels, default=harness.DEFAULT_LEVELS,
                       help="nested partition levels (default 1,10,100)")
        p.add_argument("--grid", type=int, default=256, help="residual grid subintervals per cell")
        p.add_argument("--eval-grid", type=int, default=harness.DEFAULT_EVAL_GRID)
        p.add_argument("--p", type=_norm, default=None, help="vector norm for systems (1, 2, inf)")

    p = sub.add_parser("certify", help="compute bound curves for a trained candidate")
    certify_opts(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--relative", action="store_true",
                   help="also write the relative bound (first-order problems with a negative root)")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="certify and compare against the exact solution")
    certify_opts(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("suite", help="train and certify every manufactured case")
    p.add_argument("--quick", action="store_true",
                   help=f"{harness.QUICK_EPOCHS} epochs instead of {harness.FULL_EPOCHS}")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cells", type=_levels, default=harness.DEFAULT_LEVELS)
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--eval-grid", type=int, default=harness.DEFAULT_EVAL_GRID)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        parser.print_usage(sys.stderr)
        print(f"odecert: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CertificationError, SingularMatrixError, QuadratureError, FloatingPointError) as e:
        print(f"odecert: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
