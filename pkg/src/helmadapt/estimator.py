"""Residual a posteriori error estimation.

Per-cell indicators

    eta_K = h_K ||(Lap + kappa^2) u_h||_{L2(K)}
            + ( 1/2 sum_{F in dK} h_F ||J_F||^2_{L2(F)} )^{1/2}

with face jumps J_F of the discrete normal derivative on interior faces,
2(du/dnu + g) on the obstacle, and 2(T_N u_h - du/dn) on the outer
sphere.  For P1 elements the volume residual reduces to
h_K kappa^2 ||u_h||_{L2(K)}, evaluated exactly via the mass matrix.

The truncation budget eps_N = (R'/R)^N ||g||_{L2(dD)} complements eta
(the discretization budget eps_h) in the total error bound.
"""

import numpy as np

from . import kernels, quadrature, specfun
from .assembly import _face_quadrature
from .mesh import TAG_OBSTACLE, TAG_OUTER

JUMP_INTERIOR = 0
JUMP_OBSTACLE = 1
JUMP_OUTER = 2

_HARMONIC_CHUNK = 200_000


class EstimatorError(RuntimeError):
    pass


class ErrorBudget:
    def __init__(self, eps_h, eps_n, radius, radius_src, n_trunc):
        self.eps_h = eps_h
        self.eps_n = eps_n
        self.radius = radius
        self.radius_src = radius_src
        self.n_trunc = n_trunc


def choose_truncation(radius, radius_src, g_norm, budget=1e-8):
    """Smallest N >= 1 with (R'/R)^N * ||g|| <= budget."""
    if not (0.0 < radius_src < radius):
        raise ValueError(f"need 0 < R' < R, got R'={radius_src}, R={radius}")
    n = 1
    ratio = radius_src / radius
    while (ratio ** n) * g_norm > budget:
        n += 1
    return n


def eps_truncation(radius, radius_src, g_norm, n_trunc):
    return (radius_src / radius) ** n_trunc * g_norm


def g_l2_norm(mesh, g, quad_degree=9):
    """||g||_{L2} over the obstacle surface by face quadrature."""
    f = mesh.faces
    sel = f["boundary_tag"] == TAG_OBSTACLE
    tri = f["boundary_tri"][sel]
    sub = f["boundary_sub"][sel]
    pts, w_area, _ = _face_quadrature(mesh, tri, quad_degree)
    _, n_out, _ = mesh.face_geometry(tri, sub)
    F, Q = w_area.shape
    gv = g(pts.reshape(-1, 3), np.repeat(-n_out, Q, axis=0)).reshape(F, Q)
    return float(np.sqrt(max(np.sum(w_area * np.abs(gv) ** 2), 0.0)))


def _sub_gradients(mesh, dofmap, u):
    """Constant complex gradient of u_h on every sub-tet: (Msub, 3)."""
    grads, _ = kernels.grads_vols(mesh.xyz[mesh.subtets])
    uv = u[dofmap.sub_dofs]  # (Msub, 4)
    return np.einsum("mv,mvk->mk", uv, grads)


class FaceJumps:
    """Squared face-jump norms times h_F, pre-attributed to cells."""

    def __init__(self, cell_jump2, norms, kinds):
        self.cell_jump2 = cell_jump2  # per cell: sum_F h_F ||J_F||^2
        self.norms = norms  # per face ||J_F||_{L2(F)}
        self.kinds = kinds


def face_jumps(mesh, dofmap, u, system, g, quad_degree=9):
    """Jump residual norms on all faces, accumulated per cell.

    system supplies the trace coefficients and DtN symbols for the outer
    faces; g the Neumann data on the obstacle.
    """
    f = mesh.faces
    grad = _sub_gradients(mesh, dofmap, u)
    cell2 = np.zeros(mesh.ncells)
    norms = []
    kinds = []
    # interior faces: J = (grad|K1 - grad|K2) . n1, constant per face
    tri = f["interior_tri"]
    s1 = f["interior_subs"][:, 0]
    s2 = f["interior_subs"][:, 1]
    area, n1, hf = mesh.face_geometry(tri, s1)
    jump = np.einsum("fk,fk->f", grad[s1] - grad[s2], n1)
    # faces internal to one macro cell do not carry estimator jumps (the
    # gradient of the conforming macro basis may still kink there, but the
    # cell boundary of K in the estimator is the macro boundary)
    own1 = mesh.sub_owner[s1]
    own2 = mesh.sub_owner[s2]
    ext = own1 != own2
    j2 = (np.abs(jump) ** 2) * area  # ||J||^2_{L2(F)}
    contrib = hf * j2
    np.add.at(cell2, own1[ext], contrib[ext])
    np.add.at(cell2, own2[ext], contrib[ext])
    norms.append(np.sqrt(j2[ext]))
    kinds.append(np.full(int(ext.sum()), JUMP_INTERIOR))
    # obstacle faces: J = 2 (du/dnu + g), nu outward from the obstacle
    btri = f["boundary_tri"]
    bsub = f["boundary_sub"]
    btag = f["boundary_tag"]
    for tag in (TAG_OBSTACLE, TAG_OUTER):
        sel = btag == tag
        if not sel.any():
            continue
        tri = btri[sel]
        sub = bsub[sel]
        pts, w_area, _ = _face_quadrature(mesh, tri, quad_degree)
        area, n_out, hf = mesh.face_geometry(tri, sub)
        F, Q = w_area.shape
        dn = np.einsum("fk,fk->f", grad[sub], n_out)  # du/dn, n out of cell
        if tag == TAG_OBSTACLE:
            nu = -n_out
            gv = g(pts.reshape(-1, 3), np.repeat(nu, Q, axis=0)).reshape(F, Q)
            # du/dnu = -du/dn
            res = 2.0 * (-dn[:, None] + gv)
        else:
            tnu = _dtn_trace_values(system, u, pts.reshape(-1, 3)).reshape(F, Q)
            res = 2.0 * (tnu - dn[:, None])
        # the symmetric simplex rules contain negative weights, so the
        # quadrature of |res|^2 can dip below zero at roundoff level
        j2 = np.maximum(np.sum(w_area * np.abs(res) ** 2, axis=1), 0.0)
        np.add.at(cell2, mesh.sub_owner[sub], hf * j2)
        norms.append(np.sqrt(j2))
        kinds.append(
            np.full(F, JUMP_OBSTACLE if tag == TAG_OBSTACLE else JUMP_OUTER)
        )
    return FaceJumps(cell2, np.concatenate(norms), np.concatenate(kinds))


def _dtn_trace_values(system, u, pts):
    """(T_N u_h)(x) at points on the outer sphere via the harmonic table."""
    hat = system.trace_hat(u)
    w = system.theta_rep * hat / system.radius
    nh = len(w)
    out = np.empty(len(pts), dtype=np.complex128)
    chunk = max(1, _HARMONIC_CHUNK // nh)
    for lo in range(0, len(pts), chunk):
        x = pts[lo : lo + chunk]
        r = np.linalg.norm(x, axis=1)
        theta = np.arccos(np.clip(x[:, 2] / r, -1.0, 1.0))
        phi = np.arctan2(x[:, 1], x[:, 0])
        Y = specfun.spherical_harmonic_table(system.n_trunc, theta, phi)
        out[lo : lo + chunk] = w @ Y
    return out


class IndicatorField:
    def __init__(self, eta_cells):
        self.eta_cells = eta_cells

    @property
    def eta(self):
        return float(np.sqrt(np.sum(self.eta_cells ** 2)))


def indicators(mesh, dofmap, u, jumps, kappa):
    """Per-cell eta_K from the volume residual and accumulated jumps."""
    # exact L2 norm of the P1 function per sub-tet via the mass matrix
    coords = mesh.xyz[mesh.subtets]
    _, M, _ = kernels.local_matrices(coords)
    uv = u[dofmap.sub_dofs]
    l2sub = np.real(np.einsum("mv,mvw,mw->m", np.conj(uv), M, uv))
    l2cell = np.zeros(mesh.ncells)
    np.add.at(l2cell, mesh.sub_owner, np.maximum(l2sub, 0.0))
    h = mesh.cell_diameters_fast()
    vol_term = h * (kappa ** 2) * np.sqrt(l2cell)
    eta = vol_term + np.sqrt(0.5 * np.maximum(jumps.cell_jump2, 0.0))
    return IndicatorField(eta)


def exact_error(mesh, dofmap, u, grad_exact, quad_degree=5):
    """H1-seminorm error ||grad(u_exact - u_h)||_{L2} by volume quadrature."""
    bary, w = quadrature.tet_rule(quad_degree)
    grad_h = _sub_gradients(mesh, dofmap, u)
    nsub = len(mesh.subtets)
    total = 0.0
    # chunk over sub-tets: the quadrature-point array is (chunk, Q, 3)
    chunk = max(1, 2_000_000 // len(w))
    for lo in range(0, nsub, chunk):
        hi = min(lo + chunk, nsub)
        p = mesh.xyz[mesh.subtets[lo:hi]]
        pts = np.einsum("qv,mvk->mqk", bary, p)  # (m, Q, 3)
        m, Q = pts.shape[:2]
        ge = grad_exact(pts.reshape(-1, 3)).reshape(m, Q, 3)
        diff2 = np.sum(np.abs(ge - grad_h[lo:hi, None, :]) ** 2, axis=2)
        vals = np.sum(w[None, :] * diff2, axis=1) * mesh.sub_vols[lo:hi]
        total += float(vals.sum())
    return float(np.sqrt(max(total, 0.0)))
