"""Adaptive solve-estimate-mark-refine loop.

The truncation order N of the transparent boundary condition is chosen
once up front from the budget (R'/R)^N ||g|| <= 1e-8; each iteration
solves the discrete system, computes the residual indicators, marks
cells (threshold or bulk/Doerfler) and refines until the marking is
empty or a DoF/iteration cap is hit.
"""

import time

import numpy as np

from . import assembly, estimator, linsolve, mesh as meshmod

MARK_THRESHOLD = "threshold"
MARK_BULK = "bulk"


class AdaptConfig:
    def __init__(
        self,
        tolerance=1e-3,
        max_dof=200_000,
        max_iterations=30,
        marking=MARK_BULK,
        theta=0.5,
        solver_tol=1e-10,
        quad_degree=9,
        n_trunc=None,
        trunc_budget=1e-8,
    ):
        if tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if marking == MARK_BULK and not (0.0 < theta < 1.0):
            raise ValueError("bulk parameter theta must lie in (0, 1)")
        if marking not in (MARK_THRESHOLD, MARK_BULK):
            raise ValueError(f"unknown marking strategy {marking!r}")
        self.tolerance = tolerance
        self.max_dof = int(max_dof)
        self.max_iterations = int(max_iterations)
        self.marking = marking
        self.theta = theta
        self.solver_tol = solver_tol
        self.quad_degree = quad_degree
        self.n_trunc = n_trunc  # override; None = choose automatically
        self.trunc_budget = trunc_budget


class ConvergenceHistory:
    """Append-only per-iteration records of the adaptive loop."""

    def __init__(self):
        self.rows = []

    def append(self, **kw):
        if self.rows and kw["dof"] <= self.rows[-1]["dof"]:
            raise ValueError("DoF count must increase across iterations")
        self.rows.append(kw)

    def column(self, name):
        return np.array(
            [np.nan if r[name] is None else r[name] for r in self.rows]
        )


def mark(field, config):
    """Cell indices to refine.

    THRESHOLD marks {K : eta_K > tolerance}; BULK marks the smallest set
    (taking cells by descending eta_K, ties by cell id) whose squared
    indicators reach theta^2 of the total.
    """
    eta = field.eta_cells
    if config.marking == MARK_THRESHOLD:
        return np.nonzero(eta > config.tolerance)[0]
    total = np.sum(eta ** 2)
    if total == 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta)), -eta))
    csum = np.cumsum(eta[order] ** 2)
    k = int(np.searchsorted(csum, config.theta ** 2 * total)) + 1
    sel = order[:k]
    return sel[eta[sel] > 0.0]


class Problem:
    """Scattering problem definition: geometry + Neumann data.

    g(points, normals) evaluates the boundary data; grad_exact (optional)
    the analytic solution gradient used for true-error reporting.
    """

    def __init__(self, forest, kappa, radius, radius_src, g,
                 projector=None, grad_exact=None):
        self.forest = forest
        self.kappa = kappa
        self.radius = radius
        self.radius_src = radius_src
        self.g = g
        self.projector = projector or meshmod.SurfaceProjector(radius)
        self.grad_exact = grad_exact


class AdaptResult:
    def __init__(self, history, mesh, dofmap, solution, system, field):
        self.history = history
        self.mesh = mesh
        self.dofmap = dofmap
        self.solution = solution
        self.system = system
        self.indicators = field


def run(problem, config):
    """Run the adaptive loop; returns an AdaptResult.

    On solver failure the partial history is attached to the raised
    SolverError as `history`.
    """
    history = ConvergenceHistory()
    forest = problem.forest
    lmesh = meshmod.build_closure(forest)
    g_norm = estimator.g_l2_norm(lmesh, problem.g, config.quad_degree)
    if config.n_trunc is not None:
        n_trunc = int(config.n_trunc)
    else:
        n_trunc = estimator.choose_truncation(
            problem.radius, problem.radius_src, g_norm, config.trunc_budget
        )
    eps_n = estimator.eps_truncation(
        problem.radius, problem.radius_src, g_norm, n_trunc
    )
    result = None
    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        dofmap = assembly.DofMap(lmesh)
        system = assembly.assemble(
            lmesh, dofmap, problem.kappa, problem.radius, n_trunc,
            problem.g, config.quad_degree,
        )
        try:
            u, report = linsolve.solve(system, config.solver_tol)
        except linsolve.SolverError as err:
            err.history = history
            raise
        jumps = estimator.face_jumps(
            lmesh, dofmap, u, system, problem.g, config.quad_degree
        )
        field = estimator.indicators(lmesh, dofmap, u, jumps, problem.kappa)
        e_h = None
        if problem.grad_exact is not None:
            e_h = estimator.exact_error(lmesh, dofmap, u, problem.grad_exact)
        history.append(
            iteration=it,
            dof=dofmap.ndof,
            cells=lmesh.ncells,
            n_trunc=n_trunc,
            eps_n=eps_n,
            eta=field.eta,
            e_h=e_h,
            wall_time=time.perf_counter() - t0,
        )
        result = AdaptResult(history, lmesh, dofmap, u, system, field)
        if dofmap.ndof >= config.max_dof:
            break
        marked = mark(field, config)
        if len(marked) == 0:
            break
        forest.refine(lmesh.cell_nodes[marked])
        forest.project_boundary_midpoints(problem.projector)
        lmesh = meshmod.build_closure(forest)
    return result
