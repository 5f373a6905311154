"""Solve the complex sparse + low-rank DtN linear system.

Direct path: sparse LU of the interior part combined with the
Sherman-Morrison-Woodbury identity for the (N+1)^2-rank DtN block,
computed with blockwise triangular solves so peak memory stays bounded.
Iterative fallback for large systems: restarted GMRES on the matrix-free
operator, preconditioned by an incomplete LU of the interior part.
"""

import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    def __init__(self, msg, best_residual=None):
        super().__init__(msg)
        self.best_residual = best_residual


class SolveReport:
    def __init__(self, iterations, relative_residual, wall_time):
        self.iterations = iterations
        self.relative_residual = relative_residual
        self.wall_time = wall_time

    def __repr__(self):
        return (
            f"SolveReport(iterations={self.iterations}, "
            f"relative_residual={self.relative_residual:.3e}, "
            f"wall_time={self.wall_time:.3f}s)"
        )


# beyond this many dofs the LU factorization of the interior part is too
# memory-hungry for the direct path
DIRECT_DOF_LIMIT = 40_000
_BLOCK = 64


def _solve_direct(system, b):
    """LU of the sparse part + Woodbury correction for the DtN block.

    A = A_s - U diag(w) V^T with U = conj(C), V = C scattered to the
    boundary dofs and w = R * Theta per packed harmonic.  Then
      x = A_s^{-1} (b + U t),   (I - diag(w) G) t = diag(w) V^T A_s^{-1} b,
    where G = V^T A_s^{-1} U is small ((N+1)^2 square).
    """
    lu = spla.splu(system.sparse_part.tocsc())
    bdofs = system.bdofs
    C = system.C
    nh = C.shape[1]
    w = system.radius * system.theta_rep
    x0 = lu.solve(b)
    G = np.empty((nh, nh), dtype=np.complex128)
    U = np.zeros((system.ndof, _BLOCK), dtype=np.complex128)
    for lo in range(0, nh, _BLOCK):
        hi = min(lo + _BLOCK, nh)
        U[:, : hi - lo] = 0.0
        U[bdofs, : hi - lo] = np.conj(C[:, lo:hi])
        Z = lu.solve(U[:, : hi - lo])
        G[:, lo:hi] = C.T @ Z[bdofs]
    g0 = C.T @ x0[bdofs]
    small = np.eye(nh, dtype=np.complex128) - w[:, None] * G
    t = np.linalg.solve(small, w * g0)
    rhs = b.copy()
    rhs[bdofs] += np.conj(C) @ t
    return lu.solve(rhs), lu


def solve(system, tol=1e-10, maxiter=2000):
    """Solve A u = load to relative residual tol.

    Returns (u, SolveReport).  Raises SolverError (carrying the best
    residual) when the iterative fallback fails to converge.
    """
    if not (0.0 < tol <= 1e-4):
        raise SolverError(f"tolerance {tol} outside (0, 1e-4]")
    t0 = time.perf_counter()
    b = system.load.astype(np.complex128)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return (
            np.zeros(system.ndof, dtype=np.complex128),
            SolveReport(0, 0.0, time.perf_counter() - t0),
        )
    lu = None
    if system.ndof <= DIRECT_DOF_LIMIT:
        u, lu = _solve_direct(system, b)
        res = np.linalg.norm(system.apply(u) - b) / bnorm
        if res <= tol:
            return u, SolveReport(0, float(res), time.perf_counter() - t0)
        # fall through to the iterative path with the exact-LU preconditioner
    op = spla.LinearOperator(
        (system.ndof, system.ndof), matvec=system.apply, dtype=np.complex128
    )
    if lu is None:
        ilu = spla.spilu(
            system.sparse_part.tocsc(), drop_tol=1e-5, fill_factor=20.0
        )
        M = spla.LinearOperator(
            (system.ndof, system.ndof), matvec=ilu.solve, dtype=np.complex128
        )
    else:
        M = spla.LinearOperator(
            (system.ndof, system.ndof), matvec=lu.solve, dtype=np.complex128
        )
    it = [0]

    def cb(_):
        it[0] += 1

    u, info = spla.gmres(
        op, b, rtol=tol * 0.1, restart=100, maxiter=maxiter, M=M, callback=cb,
        callback_type="pr_norm",
    )
    res = np.linalg.norm(system.apply(u) - b) / bnorm
    if res > tol:
        raise SolverError(
            f"iterative solver stalled at relative residual {res:.3e}",
            best_residual=float(res),
        )
    return u, SolveReport(it[0], float(res), time.perf_counter() - t0)
