"""Command-line entry points.

Exit codes: 0 all checks pass, 2 configuration or input error, 3 a
numerical stage failed (solver, frame integration), 4 a check missed
its tolerance (the first failing check is named on stderr).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import frame as frm
from . import pipeline as pl
from . import sym
from .frame import FlatnessError, ProjectionFailure, SingularSupport
from .potential import (NonConvergence, PotentialFileError,
                        SingularCoefficient)

_CONFIG_ERRORS = (pl.ConfigError, PotentialFileError)
_NUMERICAL_ERRORS = (NonConvergence, SingularCoefficient, FlatnessError,
                     ProjectionFailure, SingularSupport,
                     np.linalg.LinAlgError)


def _finish(state: pl.ScenarioState, results, out_dir: str,
            meshes: bool, dump: bool, csv: bool) -> int:
    os.makedirs(out_dir, exist_ok=True)
    if meshes:
        pl.write_meshes(state, out_dir)
    pl.write_diagnostics(results, os.path.join(out_dir, "diagnostics.json"),
                         state.config.name)
    if csv and state.config.family is not None:
        pl.write_family_csv(pl.family_rows(state),
                            os.path.join(out_dir, "family.csv"))
    if dump:
        pl.write_node_dump(state, os.path.join(out_dir, "nodes_theta_00.csv"))
    bad = pl.first_failure(results)
    if bad is not None:
        print(f"check failed: {bad.name} (max_residual={bad.residual:.6e}, "
              f"tolerance={bad.tolerance:.6e})", file=sys.stderr)
        return 4
    return 0


def cmd_run(args) -> int:
    config = pl.ScenarioConfig.from_file(args.config)
    state = pl.prepare(config)
    results = pl.run_checks(state)
    return _finish(state, results, config.resolve(config.output_dir),
                   meshes=True, dump=args.dump, csv=True)


def cmd_verify(args) -> int:
    config = pl.ScenarioConfig.from_file(args.config)
    state = pl.prepare(config)
    results = pl.run_checks(state)
    return _finish(state, results, config.resolve(config.output_dir),
                   meshes=False, dump=args.dump, csv=False)


def cmd_family(args) -> int:
    config = pl.ScenarioConfig.from_file(args.config)
    if config.family is None:
        raise pl.ConfigError("config has no family section")
    fam = dict(config.family)
    if args.alpha_steps is not None:
        if args.alpha_steps < 1:
            raise pl.ConfigError("--alpha-steps must be at least 1")
        lo, hi = min(fam["rapidities"]), max(fam["rapidities"])
        fam["rapidities"] = [float(t) for t in
                             np.linspace(lo, hi, args.alpha_steps)]
    if args.beta_steps is not None:
        if args.beta_steps < 1:
            raise pl.ConfigError("--beta-steps must be at least 1")
        fam["phases"] = [2.0 * np.pi * k / args.beta_steps
                         for k in range(args.beta_steps)]
    config.family = fam

    state = pl.prepare(config)
    out_dir = config.resolve(config.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    rows = pl.family_rows(state)
    pl.write_family_csv(rows, os.path.join(out_dir, "family.csv"))
    for idx, row in enumerate(rows):
        stem = f"family_{idx:02d}"
        pl.write_obj(os.path.join(out_dir, stem + ".obj"), stem,
                     row["member"].coords, config.grid)
    return 0


def cmd_export(args) -> int:
    try:
        FF = frm.load_frame_cache(args.frame_cache)
    except OSError as exc:
        raise pl.ConfigError(f"cannot read frame cache: {exc}") from exc
    out_dir = args.out or os.path.dirname(os.path.abspath(args.frame_cache))
    os.makedirs(out_dir, exist_ok=True)
    bundle = sym.compute_bundle(FF)
    for i in range(FF.loops.n):
        theta = float(FF.loops.theta[i])
        nil = sym.sym_nil(FF, theta, bundle)
        mink, _ = sym.sym_minkowski(FF, theta, bundle)
        for ambient, surf in (("nil", nil), ("l3", mink)):
            stem = f"{ambient}_theta_{i:02d}"
            pl.write_obj(os.path.join(out_dir, stem + ".obj"), stem,
                         surf.coords, FF.grid)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nilforge",
        description="Associated families of constant mean curvature 1/2 "
                    "surfaces in Minkowski 3-space and minimal surfaces in "
                    "the Heisenberg group, from a prescribed holomorphic "
                    "coefficient.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full pipeline: meshes, diagnostics, "
                           "family CSV")
    p_run.add_argument("config")
    p_run.add_argument("--dump", action="store_true",
                       help="also write per-node CSV diagnostics")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="checks and diagnostics only")
    p_ver.add_argument("config")
    p_ver.add_argument("--dump", action="store_true",
                       help="also write per-node CSV diagnostics")
    p_ver.set_defaults(func=cmd_verify)

    p_fam = sub.add_parser("family", help="boost-family sweep to CSV and "
                           "member meshes")
    p_fam.add_argument("config")
    p_fam.add_argument("--alpha-steps", type=int, default=None)
    p_fam.add_argument("--beta-steps", type=int, default=None)
    p_fam.set_defaults(func=cmd_family)

    p_exp = sub.add_parser("export", help="meshes from a saved frame cache")
    p_exp.add_argument("--frame-cache", required=True)
    p_exp.add_argument("--out", default=None)
    p_exp.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
