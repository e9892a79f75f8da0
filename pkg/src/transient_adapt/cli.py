"""
Command line entry point.

Subcommands::

    adapt        remesh a mesh file for a metric file
    solve        one transient run on a fixed uniform mesh
    fixed-point  the full adaptive algorithm
    study        convergence sweeps
    mesh-info    mesh statistics and metric edge-length histogram

Exit status is 0 on success, 2 on configuration or input errors and 3 on
numerical failures.
"""
import argparse
import os
import sys

import numpy as np

from .adapt import AdaptParams, adapt_mesh, unit_edge_histogram
from .driver import CSV_HEADER, config_from_mapping, convergence_study, global_fixed_point, load_config
from .errors import (AssemblyError, InsufficientDataError, InsufficientPatchError,
                     MeshFormatError, MeshStructureError, SolverError)
from .fem import l2_error, solve_interval
from .mesh import load_mesh, save_mesh, structured_rect_mesh
from .metric import MetricField, complexity, read_metric_file
from .transfer import reinterpolate_exact

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


_CONFIG_FLAGS = [
    # flag, config key, type, help
    ("--n-i", "n_I", int, "number of time sub-intervals"),
    ("--n-t", "n_T", int, "time steps per sub-interval"),
    ("--n-avg", "N_avg", float, "target average spatial complexity"),
    ("--n-fp", "n_fp", int, "fixed-point iterations"),
    ("--p", "p", float, "L^p norm of the error model"),
    ("--beta", "beta", float, "gradation bound"),
    ("--h-min", "h_min", float, "smallest allowed size"),
    ("--h-max", "h_max", float, "largest allowed size"),
    ("--seed", "seed", int, "seed of every randomised ordering"),
    ("--nx", "nx", int, "initial mesh cells along x"),
    ("--ny", "ny", int, "initial mesh cells along y"),
    ("--delta", "delta", float, "front steepness of the reference solution"),
    ("--c", "c", float, "front speed"),
    ("--T", "T", float, "final time"),
    ("--solver", "solver", str, "linear solver: cg or direct"),
]


def _add_config_flags(p):
    p.add_argument("--config", help="flat key=value configuration file")
    for flag, key, typ, text in _CONFIG_FLAGS:
        p.add_argument(flag, dest=key, type=typ, default=None, help=text)
    p.add_argument("--cancel-transfer-error", dest="cancel_transfer_error",
                   action="store_const", const=True, default=None,
                   help="reinterpolate the exact solution at interval starts")
    p.add_argument("--svg", action="store_const", const=True, default=None,
                   help="write an SVG of every mesh")
    p.add_argument("--output-dir", dest="output_dir", default=None)


def _config(args):
    overrides = {key: getattr(args, key) for _, key, _, _ in _CONFIG_FLAGS}
    overrides["cancel_transfer_error"] = args.cancel_transfer_error
    overrides["svg"] = args.svg
    overrides["output_dir"] = args.output_dir
    if args.config:
        return load_config(args.config, overrides)
    return config_from_mapping({k: v for k, v in overrides.items() if v is not None})


def build_parser():
    parser = _Parser(prog="transient-adapt",
                     description="Anisotropic metric-based adaptation for transient problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("adapt", help="remesh a mesh for a metric file")
    p.add_argument("mesh")
    p.add_argument("metric", help="metric file with one tensor per mesh vertex")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="one transient run on a uniform mesh")
    _add_config_flags(p)
    p.add_argument("--dump", help="write final nodal values to this file")

    p = sub.add_parser("fixed-point", help="global fixed-point adaptation")
    _add_config_flags(p)

    p = sub.add_parser("study", help="convergence sweep")
    _add_config_flags(p)
    p.add_argument("--kind", choices=["fixed-nI", "fixed-Navg"], required=True)
    p.add_argument("--sweep", required=True,
                   help="comma-separated N_avg values (fixed-nI) or n_I values (fixed-Navg)")

    p = sub.add_parser("mesh-info", help="mesh statistics")
    p.add_argument("mesh")
    p.add_argument("--metric", help="also print the metric edge-length histogram")
    return parser


def _cmd_adapt(args):
    mesh = load_mesh(args.mesh)
    field = MetricField(mesh, read_metric_file(args.metric))
    out = adapt_mesh(mesh, field, AdaptParams(seed=args.seed))
    save_mesh(out, args.output)
    print(f"V={out.n_vertices} T={out.n_triangles} complexity={complexity(field):.6g}")


def _cmd_solve(args):
    cfg = _config(args)
    prob = cfg.problem
    mesh = structured_rect_mesh(cfg.nx, cfg.ny, bounds=prob.domain)
    n_steps = cfg.n_I * cfg.n_T
    state, _ = solve_interval(mesh, reinterpolate_exact(mesh, prob, 0.0), 0.0, cfg.T,
                              n_steps, prob, hessian=False, solver=cfg.solver)
    err = l2_error(mesh, state.u_now, cfg.T, prob)
    print(f"V={mesh.n_vertices} dt={cfg.dt:.6g} L2_error_at_T={err:.6e}")
    if args.dump:
        np.savetxt(args.dump, state.u_now, fmt="%.17g")


def _cmd_fixed_point(args):
    cfg = _config(args)
    print(f"dt={cfg.dt:.6g}")
    res = global_fixed_point(cfg, progress=print)
    if not cfg.output_dir:
        sys.stdout.write(res.csv_text())


def _cmd_study(args):
    cfg = _config(args)
    try:
        sweep = [float(s) for s in args.sweep.split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"bad sweep list '{args.sweep}'") from None
    res = convergence_study(args.kind, cfg, sweep, progress=print)
    if not cfg.output_dir:
        print(",".join(CSV_HEADER))
        for j, point in enumerate(res.points, start=1):
            sys.stdout.write(point.csv_text().split("\n", 1)[1])
    print(f"rate={res.rate:.4f}")


def _cmd_mesh_info(args):
    mesh = load_mesh(args.mesh)
    n_bnd = len(mesh.boundary_edges)
    print(f"V={mesh.n_vertices}")
    print(f"T={mesh.n_triangles}")
    print(f"E_boundary={n_bnd}")
    print(f"E={mesh.n_edges}")
    print(f"area={mesh.signed_areas.sum():.12g}")
    if args.metric:
        field = MetricField(mesh, read_metric_file(args.metric))
        counts, bins = unit_edge_histogram(mesh, field)
        print("metric edge lengths:")
        for lo, hi, c in zip(bins[:-1], bins[1:], counts):
            if c:
                print(f"  [{lo:.1f}, {hi:.1f}): {c}")


_COMMANDS = {"adapt": _cmd_adapt, "solve": _cmd_solve, "fixed-point": _cmd_fixed_point,
             "study": _cmd_study, "mesh-info": _cmd_mesh_info}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (SolverError, ArithmeticError, InsufficientPatchError, AssemblyError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MeshFormatError, MeshStructureError, InsufficientDataError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
