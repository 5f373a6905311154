"""Command-line driver for the adaptive scattering solver.

Runs one of the built-in scattering problems (or a user-supplied MSH
obstacle mesh) through the adaptive refine/solve loop and writes the
convergence history as CSV plus the final mesh and solution as VTK.
"""

import argparse
import math
import os
import sys

from . import adapt, fileio, problems


def build_parser():
    p = argparse.ArgumentParser(
        prog="helmadapt",
        description="Adaptive FEM solver for exterior acoustic scattering "
        "with a truncated Dirichlet-to-Neumann boundary condition.",
    )
    p.add_argument("--example", type=int, choices=(1, 2), default=1,
                   help="built-in problem: 1 = sphere with analytic solution, "
                   "2 = U-shaped obstacle, plane-wave incidence (default 1)")
    p.add_argument("--mesh", type=str, default=None,
                   help="MSH 2.2 file overriding the built-in initial mesh")
    p.add_argument("--kappa", type=float, default=math.pi,
                   help="wavenumber (default pi)")
    p.add_argument("--radius-R", type=float, default=1.0, dest="radius_r",
                   help="radius of the truncating sphere (default 1)")
    p.add_argument("--radius-Rprime", type=float, default=None,
                   dest="radius_rprime",
                   help="radius of a sphere enclosing the obstacle "
                   "(default: per-example value)")
    p.add_argument("--truncation-N", type=int, default=None, dest="trunc_n",
                   help="override the automatic DtN truncation order")
    p.add_argument("--tol", type=float, default=1e-3,
                   help="stop when the estimator drops below this (default 1e-3)")
    p.add_argument("--theta", type=float, default=0.5,
                   help="marking parameter in (0,1) (default 0.5)")
    p.add_argument("--marking", choices=(adapt.MARK_THRESHOLD, adapt.MARK_BULK),
                   default=adapt.MARK_BULK,
                   help="marking strategy (default bulk)")
    p.add_argument("--max-dof", type=int, default=200_000,
                   help="stop once the dof count reaches this (default 200000)")
    p.add_argument("--max-iter", type=int, default=30,
                   help="maximum adaptive iterations (default 30)")
    p.add_argument("--quad-degree", type=int, default=9,
                   help="polynomial degree of the surface quadrature (default 9)")
    p.add_argument("--out", type=str, default=".",
                   help="output directory for history.csv and final.vtk")
    return p


def validate(args):
    if args.kappa <= 0:
        raise SystemExit("error: --kappa must be positive")
    if not 0.0 < args.theta < 1.0:
        raise SystemExit("error: --theta must lie in (0, 1)")
    if args.radius_rprime is not None and args.radius_rprime >= args.radius_r:
        raise SystemExit("error: --radius-Rprime must be smaller than --radius-R")
    if args.max_dof <= 0 or args.max_iter <= 0:
        raise SystemExit("error: --max-dof and --max-iter must be positive")


def make_problem(args):
    if args.example == 1:
        prob = problems.example1(kappa=args.kappa)
    else:
        prob = problems.example2(kappa=args.kappa, mesh_path=args.mesh)
    if args.example == 1 and args.mesh is not None:
        prob.forest = fileio.read_msh(args.mesh)
    if args.radius_rprime is not None:
        prob.radius_src = args.radius_rprime
    prob.radius = args.radius_r
    return prob


def main(argv=None):
    args = build_parser().parse_args(argv)
    validate(args)
    prob = make_problem(args)
    config = adapt.AdaptConfig(
        tolerance=args.tol,
        max_dof=args.max_dof,
        max_iterations=args.max_iter,
        marking=args.marking,
        theta=args.theta,
        quad_degree=args.quad_degree,
        n_trunc=args.trunc_n,
    )
    result = adapt.run(prob, config)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "history.csv")
    vtk_path = os.path.join(args.out, "final.vtk")
    fileio.export_csv(result.history, csv_path)
    fileio.write_vtk(vtk_path, result.mesh, solution=result.solution,
                     dofmap=result.dofmap, eta_cells=result.indicators.eta_cells)
    last = result.history.rows[-1]
    print(f"finished: {len(result.history.rows)} iterations, "
          f"{last['dof']} dofs, eta = {last['eta']:.4g}")
    print(f"wrote {csv_path} and {vtk_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
