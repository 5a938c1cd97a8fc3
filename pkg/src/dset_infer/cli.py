"""``dset-infer`` command line: run, map, calibrate, check.

Errors go to stderr tagged with the failing stage, e.g.
``dset-infer: [sample squared_rho1000] InitializationError: ...``, and the
process exits nonzero.  ``DSET_INFER_OUTPUT_DIR`` overrides the config's
output directory.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import OUTPUT_ENV, load_config
from .exceptions import DsetError

EXIT_OK, EXIT_FAILED_CHECK, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(
        prog="dset-infer",
        description="Bayesian inference under set constraints with distance-to-set priors.",
        epilog=f"Set {OUTPUT_ENV} to override the output directory of any config.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "sample the experiment (calibrating rho first if the config gives a budget)"),
        ("map", "proximal-distance MAP along a rho schedule; writes map_trace.csv"),
        ("calibrate", "choose rho from the budget D by exponential tilting"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="TOML experiment file")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for chains")
    sub.add_parser("check", help="oracle checks for the convergence theorems and gradients")
    return p


def _fail(stage, exc, code=EXIT_ERROR):
    from .experiments import StageError

    msg = str(exc) if isinstance(exc, StageError) else f"[{stage}] {type(exc).__name__}: {exc}"
    print(f"dset-infer: {msg}", file=sys.stderr)
    return code


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "check":
        from .checks import run_all

        try:
            results = run_all()
        except (DsetError, ValueError, RuntimeError) as exc:
            return _fail("check", exc)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED_CHECK

    try:
        cfg = load_config(args.config)
    except (DsetError, ValueError, OSError) as exc:
        return _fail("config", exc, EXIT_CONFIG)

    from . import experiments as ex

    try:
        if args.command == "run":
            report = ex.dispatch_run(cfg, n_jobs=args.jobs)
        elif args.command == "map":
            report = ex.run_map(cfg)
        else:
            if not cfg.calibration_mode:
                return _fail("config", ValueError("calibrate needs [penalty] budget"), EXIT_CONFIG)
            report = ex.calibrate_only(cfg, n_jobs=args.jobs)
    except DsetError as exc:
        return _fail(args.command, exc)
    except (ValueError, OSError) as exc:
        return _fail(args.command, exc)

    for path in report.files:
        print(path)
        if path.name.startswith("summary_") and path.suffix == ".txt":
            print(path.read_text(), end="")
    for text in report.tables.values():
        if isinstance(text, str):
            print(text)
    cal = report.extras.get("calibration")
    if cal is not None:
        print(f"rho = {cal.lam:.6g} (achieved moment {cal.achieved_moment:.6g}, budget {cal.budget:g})")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
