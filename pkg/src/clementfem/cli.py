"""Command line entry point ``clementfem``.

Exit codes: 0 success, 2 usage error, 3 invalid configuration,
4 numerical failure (solver, quadrature, weights), 5 violated identity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .assembly import SolverError
from .clement import WeightError
from .experiments import (PROJECTORS, ConfigError, ExperimentConfig,
                          format_table, hms_config, provenance, run_clement1d,
                          run_fosls_waterfall, run_generic,
                          run_mixed_l2_compare, table_rows, write_csv)
from .loads import LoadError
from .postprocess import ErrorNormError
from .quadrature import QuadratureError

log = logging.getLogger("clementfem")

DEFAULT_LEVELS = {"clement1d": 8, "mixed-hms": 7, "mixed-l2-compare": 8,
                  "fosls-waterfall": 8, "solve": 6}


def _common(p):
    p.add_argument("--levels", type=int, help="number of meshes in the ladder")
    p.add_argument("--deep", action="store_true",
                   help="one extra refinement level (#T = 262144 for tables)")
    p.add_argument("--out", default=None, help="output directory for CSV")
    p.add_argument("--mesh-out", default=None,
                   help="write the finest mesh to this file")
    p.add_argument("--dump-system", default=None,
                   help="write the finest system matrix (row col value)")
    p.add_argument("--quad-degree", type=int, default=None,
                   help="load quadrature degree override")
    p.add_argument("--config", default=None,
                   help="flat key = value file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clementfem",
        description="Mixed FEM and FOSLS with regularized H^-1 loads.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("clement1d", help="1D quasi-interpolation errors")
    _common(p)
    p = sub.add_parser("mixed-hms", help="mixed FEM with a non-L2 load")
    _common(p)
    p.add_argument("--projector", choices=PROJECTORS, default=None)
    p = sub.add_parser("mixed-l2-compare",
                       help="standard vs regularized mixed FEM table")
    _common(p)
    p = sub.add_parser("fosls-waterfall",
                       help="regularized vs standard FOSLS table")
    _common(p)
    p = sub.add_parser("solve", help="any case x method x projector")
    _common(p)
    p.add_argument("--case", default=None)
    p.add_argument("--method", choices=("mixed", "fosls"), default=None)
    p.add_argument("--projector", choices=PROJECTORS, default=None)
    p.add_argument("--base", choices=("criss-cross", "single"), default=None)
    p.add_argument("--refinement", choices=("nvb", "red"), default=None)
    p.add_argument("--write-config", default=None,
                   help="write the resolved configuration and exit")
    return parser


def _levels(args):
    n = args.levels if args.levels is not None else DEFAULT_LEVELS[args.command]
    return n + 1 if args.deep else n


def _out(args, name):
    return os.path.join(args.out or ".", name)


def _config(args, base):
    if args.config:
        base = ExperimentConfig.load(args.config)
    kw = dict(quad_degree=args.quad_degree, mesh_out=args.mesh_out,
              dump_system=args.dump_system, out=args.out)
    if args.levels is not None or args.deep or not args.config:
        kw["levels"] = _levels(args)
    for name in ("case", "method", "projector", "base", "refinement"):
        kw[name] = getattr(args, name, None)
    return base.override(**kw).validate()


def _emit(args, name, header, rows, comment):
    path = write_csv(_out(args, name), header, rows, comment)
    print(comment)
    print(format_table(header, rows))
    print(f"wrote {path}")


def cmd_clement1d(args):
    fams = run_clement1d(_levels(args))
    for fam, recs in fams.items():
        header, rows = table_rows({"": recs}, count="nE")
        _emit(args, f"clement1d_{fam}.csv", header, rows,
              provenance("clement1d", family=fam, error_quad_degree=10))


def cmd_mixed_hms(args):
    cfg = hms_config(levels=_levels(args))
    cfg = _config(args, cfg)
    header, rows = run_generic(cfg)
    _emit(args, "mixed_hms.csv", header, rows, provenance("mixed-hms", cfg))


def _table_kw(args):
    return dict(quad_degree=args.quad_degree, mesh_out=args.mesh_out or "",
                dump_system=args.dump_system or "")


def cmd_mixed_l2_compare(args):
    cfg, header, rows = run_mixed_l2_compare(_levels(args), **_table_kw(args))
    _emit(args, "mixed_l2_compare.csv", header, rows,
          provenance("mixed-l2-compare", cfg))


def cmd_fosls_waterfall(args):
    cfg, header, rows = run_fosls_waterfall(_levels(args), **_table_kw(args))
    _emit(args, "fosls_waterfall.csv", header, rows,
          provenance("fosls-waterfall", cfg))


def cmd_solve(args):
    cfg = _config(args, ExperimentConfig())
    if args.write_config:
        with open(args.write_config, "w") as fh:
            fh.write(cfg.to_text())
        print(f"wrote {args.write_config}")
        return
    header, rows = run_generic(cfg)
    _emit(args, f"solve_{cfg.case}_{cfg.method}_{cfg.projector}.csv",
          header, rows, provenance("solve", cfg))


COMMANDS = {"clement1d": cmd_clement1d, "mixed-hms": cmd_mixed_hms,
            "mixed-l2-compare": cmd_mixed_l2_compare,
            "fosls-waterfall": cmd_fosls_waterfall, "solve": cmd_solve}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"clementfem: error: {exc}", file=sys.stderr)
        return 3
    except (SolverError, LoadError, ErrorNormError, QuadratureError,
            WeightError) as exc:
        print(f"clementfem: numerical failure: {exc}", file=sys.stderr)
        return 4
    except RuntimeError as exc:
        print(f"clementfem: check failed: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
