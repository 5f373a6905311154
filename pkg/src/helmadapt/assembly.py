"""Complex P1 finite element assembly.

Assembles the sesquilinear form of the truncated exterior Helmholtz
problem: interior stiffness/mass over the sub-tetrahedra of the leaf
mesh, the low-rank DtN boundary block on the outer sphere, and the
Neumann load on the obstacle surface.

The DtN block is never densified.  With boundary coupling coefficients
c_{j,nm} = (1/R^2) \int_{outer} phi_j conj(Y_n^m) ds the full operator is

    A u = A_sparse u - R * conj(C) diag(Theta_n) C^T u|_boundary

so that the quadratic form u^H (DtN u) = R sum Theta_n |u_hat_n^m|^2 has
nonpositive real part and nonnegative imaginary part by construction.
"""

import numpy as np
import scipy.sparse as sp

from . import kernels, quadrature, specfun
from .mesh import TAG_OBSTACLE, TAG_OUTER

# quadrature points per chunk when evaluating spherical-harmonic tables;
# bounds peak memory at ~chunk * (N+1)^2 complex values
_HARMONIC_CHUNK = 200_000


class AssemblyError(RuntimeError):
    pass


class DofMap:
    """Vertex-id to dof-index map over a LeafMesh.

    Every vertex referenced by a sub-tetrahedron carries one DoF; the
    transitional midpoints therefore share indices with the finer
    neighbor's corner DoFs, which is what makes the space conforming.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        verts = np.unique(mesh.subtets)
        self.vertex_ids = verts
        self.ndof = len(verts)
        v2d = np.full(mesh.xyz.shape[0], -1, dtype=np.int64)
        v2d[verts] = np.arange(self.ndof)
        self.vertex_to_dof = v2d
        self.sub_dofs = v2d[mesh.subtets]  # (Msub, 4)
        f = mesh.faces
        self.boundary_dofs = {}
        for tag in (TAG_OBSTACLE, TAG_OUTER):
            sel = f["boundary_tag"] == tag
            self.boundary_dofs[tag] = v2d[np.unique(f["boundary_tri"][sel])]

    def coords(self):
        return self.mesh.xyz[self.vertex_ids]


def element_matrices(mesh, cell):
    """Local stiffness and mass of one cell (4x4, or 5x5/7x7/kxk for
    transitional cells), assembled by summing sub-tet contributions over
    the cell's shared-vertex DoFs."""
    sel = np.nonzero(mesh.sub_owner == cell)[0]
    verts = np.unique(mesh.subtets[sel])
    local = {int(v): i for i, v in enumerate(verts)}
    n = len(verts)
    S = np.zeros((n, n))
    M = np.zeros((n, n))
    coords = mesh.xyz[mesh.subtets[sel]]
    Se, Me, vols = kernels.local_matrices(coords)
    if np.any(vols <= 0):
        raise AssemblyError(f"degenerate sub-tetrahedron in cell {cell}")
    for t, s in enumerate(sel):
        idx = [local[int(v)] for v in mesh.subtets[s]]
        for a in range(4):
            for b in range(4):
                S[idx[a], idx[b]] += Se[t, a, b]
                M[idx[a], idx[b]] += Me[t, a, b]
    return verts, S, M


def _sparse_part(mesh, dofmap, kappa):
    """CSR matrix of  int grad u . grad v - kappa^2 int u v  over sub-tets."""
    coords = mesh.xyz[mesh.subtets]
    S, M, vols = kernels.local_matrices(coords)
    if np.any(vols <= 0):
        bad = int(np.argmax(vols <= 0))
        raise AssemblyError(f"degenerate sub-tetrahedron {bad}")
    loc = S - (kappa ** 2) * M
    d = dofmap.sub_dofs
    rows = np.repeat(d, 4, axis=1).ravel()
    cols = np.tile(d, (1, 4)).ravel()
    A = sp.coo_matrix(
        (loc.ravel().astype(np.complex128), (rows, cols)),
        shape=(dofmap.ndof, dofmap.ndof),
    )
    return A.tocsr()


def _face_quadrature(mesh, tri, quad_degree):
    """Quadrature points, scaled weights, and P1 vertex values on faces.

    Returns (points (F, Q, 3), w_area (F, Q), bary (Q, 3)).
    w_area[f, q] already includes the face area, so sums approximate
    surface integrals directly.
    """
    bary, w = quadrature.triangle_rule(quad_degree)
    p = mesh.xyz[tri]  # (F, 3, 3)
    pts = np.einsum("qv,fvk->fqk", bary, p)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    return pts, area[:, None] * w[None, :], bary


def boundary_coupling(mesh, dofmap, n_trunc, radius, quad_degree=9):
    """DtN coupling coefficients c_{j,nm} on the outer sphere.

    Returns (C, bdofs): C has shape (len(bdofs), (n_trunc+1)^2) with
    harmonics in packed (n, m) order; bdofs are the outer-boundary dof
    indices (rows of C).
    """
    f = mesh.faces
    sel = f["boundary_tag"] == TAG_OUTER
    if not sel.any():
        raise AssemblyError("mesh has no outer-boundary faces")
    tri = f["boundary_tri"][sel]
    pts, w_area, bary = _face_quadrature(mesh, tri, quad_degree)
    nh = specfun.harmonic_count(n_trunc)
    bdofs = dofmap.boundary_dofs[TAG_OUTER]
    brow = np.full(dofmap.ndof, -1, dtype=np.int64)
    brow[bdofs] = np.arange(len(bdofs))
    C = np.zeros((len(bdofs), nh), dtype=np.complex128)
    fdofs = dofmap.vertex_to_dof[tri]  # (F, 3)
    nq = pts.shape[1]
    chunk = max(1, _HARMONIC_CHUNK // (nh * nq))
    for lo in range(0, len(tri), chunk):
        hi = min(lo + chunk, len(tri))
        x = pts[lo:hi].reshape(-1, 3)
        r = np.linalg.norm(x, axis=1)
        theta = np.arccos(np.clip(x[:, 2] / r, -1.0, 1.0))
        phi = np.arctan2(x[:, 1], x[:, 0])
        Y = specfun.spherical_harmonic_table(n_trunc, theta, phi)  # (nh, P)
        Yc = np.conj(Y).T.reshape(hi - lo, nq, nh)
        contrib = np.einsum("fq,qv,fqn->fvn", w_area[lo:hi], bary, Yc)
        rows = brow[fdofs[lo:hi]]  # (f, 3)
        np.add.at(C, rows.ravel(), contrib.reshape(-1, nh))
    C /= radius ** 2
    return C, bdofs


class AssembledSystem:
    """Sparse interior part plus low-rank DtN block plus load."""

    def __init__(self, sparse_part, C, bdofs, theta, radius, kappa, n_trunc, load):
        self.sparse_part = sparse_part
        self.C = C
        self.bdofs = bdofs
        self.theta = theta  # Theta_n, n = 0..N
        self.radius = radius
        self.kappa = kappa
        self.n_trunc = n_trunc
        self.load = load
        self.ndof = sparse_part.shape[0]
        n = np.arange(n_trunc + 1)
        self.theta_rep = np.repeat(theta, 2 * n + 1)  # per packed (n, m)

    def trace_hat(self, u):
        """Packed Fourier coefficients of the trace of u on the sphere."""
        return u[self.bdofs] @ self.C

    def dtn_apply(self, u):
        """The DtN block action  R conj(C) diag(Theta) C^T u|_b, scattered
        into a full-length vector."""
        w = self.theta_rep * self.trace_hat(u)
        out = np.zeros(self.ndof, dtype=np.complex128)
        out[self.bdofs] = self.radius * (np.conj(self.C) @ w)
        return out

    def apply(self, u):
        return self.sparse_part @ u - self.dtn_apply(u)

    def quadratic_form(self, ub):
        """q(u) = R sum Theta_n |u_hat|^2 for boundary values ub (length
        len(bdofs)); has Re q <= 0 and Im q >= 0 by construction."""
        hat = ub @ self.C
        return self.radius * np.sum(self.theta_rep * np.abs(hat) ** 2)


class TraceCoefficients:
    def __init__(self, values, n_trunc, radius):
        self.values = values  # packed (n, m)
        self.n_trunc = n_trunc
        self.radius = radius

    def degree_norms(self):
        """l2 norm of the coefficients of each degree n."""
        out = np.empty(self.n_trunc + 1)
        for n in range(self.n_trunc + 1):
            lo = specfun.harmonic_index(n, -n)
            hi = specfun.harmonic_index(n, n) + 1
            out[n] = np.linalg.norm(self.values[lo:hi])
        return out


def trace_coefficients(system, u):
    return TraceCoefficients(system.trace_hat(u), system.n_trunc, system.radius)


def neumann_load(mesh, dofmap, g, quad_degree=9):
    """Load vector b_i = int_{obstacle} g phi_i ds.

    g(points, normals) receives quadrature points and unit normals
    pointing outward from the obstacle (into the computational domain).
    """
    f = mesh.faces
    sel = f["boundary_tag"] == TAG_OBSTACLE
    if not sel.any():
        raise AssemblyError("mesh has no obstacle faces")
    tri = f["boundary_tri"][sel]
    sub = f["boundary_sub"][sel]
    pts, w_area, bary = _face_quadrature(mesh, tri, quad_degree)
    # face normal outward from the adjacent sub-tet = outward from the
    # domain = inward to the obstacle; the obstacle's outward normal nu
    # (the paper's nu on the boundary of D) is its negative
    _, n_out, _ = mesh.face_geometry(tri, sub)
    nu = -n_out
    F, Q = w_area.shape
    gv = g(pts.reshape(-1, 3), np.repeat(nu, Q, axis=0)).reshape(F, Q)
    contrib = np.einsum("fq,fq,qv->fv", w_area, gv, bary)
    b = np.zeros(dofmap.ndof, dtype=np.complex128)
    np.add.at(b, dofmap.vertex_to_dof[tri].ravel(), contrib.ravel())
    return b


def assemble(mesh, dofmap, kappa, radius, n_trunc, g, quad_degree=9):
    """Assemble the full system for wavenumber kappa, DtN sphere radius
    `radius`, truncation order n_trunc, and Neumann data g."""
    A = _sparse_part(mesh, dofmap, kappa)
    theta = specfun.theta_coefficients(n_trunc, kappa * radius)
    C, bdofs = boundary_coupling(mesh, dofmap, n_trunc, radius, quad_degree)
    b = neumann_load(mesh, dofmap, g, quad_degree)
    return AssembledSystem(A, C, bdofs, theta, radius, kappa, n_trunc, b)
