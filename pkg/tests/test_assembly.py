"""Finite element assembly: local matrices, boundary coupling, load."""

import math

import numpy as np
import pytest
from scipy.sparse.linalg import norm as spnorm

from helmadapt import assembly, mesh as meshmod, problems, specfun
from helmadapt.mesh import TAG_OBSTACLE, TAG_OUTER, generate_shell_mesh


@pytest.fixture(scope="module")
def shell2():
    forest, lm = generate_shell_mesh(0.5, 1.0, 2)
    return lm


@pytest.fixture(scope="module")
def shell2_system(shell2):
    dofmap = assembly.DofMap(shell2)
    g = problems.boundary_data_example1(math.pi)
    system = assembly.assemble(shell2, dofmap, math.pi, 1.0, 6, g)
    return dofmap, system


def test_element_matrices_reference_tet():
    # single-tet mesh: S has zero row sums, M = vol/20 (1 + I)
    forest = meshmod.HgtForest()
    for p, t in (
        ([0, 0, 0], TAG_OBSTACLE),
        ([1, 0, 0], TAG_OBSTACLE),
        ([0, 1, 0], TAG_OBSTACLE),
        ([0, 0, 1], TAG_OBSTACLE),
    ):
        forest.add_vertex(p, t)
    forest.add_root([0, 1, 2, 3])
    for tri in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        forest.tag_face(*tri, TAG_OBSTACLE)
    lm = meshmod.build_closure(forest)
    verts, S, M = assembly.element_matrices(lm, 0)
    vol = 1.0 / 6.0
    np.testing.assert_allclose(S.sum(axis=1), 0.0, atol=1e-14)
    np.testing.assert_allclose(S, S.T, atol=1e-14)
    np.testing.assert_allclose(M, vol / 20.0 * (np.ones((4, 4)) + np.eye(4)), atol=1e-15)
    assert abs(np.trace(M) - 1.0 / 15.0) < 1e-15


def test_element_matrices_stiffness_row_sums_vanish(shell2):
    # constants are in the kernel of the stiffness form on every cell
    for c in range(0, shell2.ncells, 7):
        _, S, M = assembly.element_matrices(shell2, c)
        np.testing.assert_allclose(S.sum(axis=1), 0.0, atol=1e-12)
        assert M.sum() > 0.0


def test_sparse_part_complex_symmetric(shell2):
    dofmap = assembly.DofMap(shell2)
    A = assembly._sparse_part(shell2, dofmap, math.pi)
    assert A.dtype == np.complex128
    assert spnorm(A - A.T) < 1e-12 * spnorm(A)


def test_mass_total_equals_volume(shell2):
    # kappa chosen so A = S - M; testing ones^T M ones = volume
    dofmap = assembly.DofMap(shell2)
    A = assembly._sparse_part(shell2, dofmap, 1.0)
    ones = np.ones(dofmap.ndof)
    quad = -float((ones @ (A @ ones)).real)  # stiffness part annihilates 1
    assert abs(quad - shell2.total_volume()) < 1e-10


def test_constant_trace_coefficient(shell2_system):
    # u === 1 on the outer sphere: only the (0,0) coefficient survives and
    # equals Y_0^0 * 4 pi R^2 / R^2 = sqrt(4 pi) up to the polyhedral
    # boundary deficit of the coarse mesh
    dofmap, system = shell2_system
    u = np.ones(dofmap.ndof, dtype=complex)
    coef = assembly.trace_coefficients(system, u)
    c00 = coef.values[specfun.harmonic_index(0, 0)]
    # resolution-2 polyhedral sphere: ~12% area deficit
    assert abs(c00 - math.sqrt(4.0 * math.pi)) < 0.15 * math.sqrt(4.0 * math.pi)
    # higher coefficients are comparatively small
    rest = np.abs(np.delete(coef.values, specfun.harmonic_index(0, 0)))
    assert rest.max() < 0.05 * abs(c00)


def test_dtn_quadratic_form_signs(shell2_system):
    dofmap, system = shell2_system
    rng = np.random.default_rng(42)
    nb = len(system.bdofs)
    for _ in range(1000):
        ub = rng.standard_normal(nb) + 1j * rng.standard_normal(nb)
        q = system.quadratic_form(ub)
        assert q.real <= 0.0
        assert q.imag >= 0.0


def test_dtn_apply_linearity(shell2_system):
    dofmap, system = shell2_system
    rng = np.random.default_rng(0)
    n = dofmap.ndof
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    a = 0.7 - 0.2j
    lhs = system.apply(a * u + v)
    rhs = a * system.apply(u) + system.apply(v)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_neumann_load_constant_data(shell2):
    # g === 1: sum of load entries = obstacle surface area (partition of
    # unity), which for the coarse polyhedral sphere of radius 0.5 is a bit
    # below pi
    dofmap = assembly.DofMap(shell2)
    load = assembly.neumann_load(shell2, dofmap, lambda x, nu: np.ones(len(x)))
    area = float(load.sum().real)
    f = shell2.faces
    sel = f["boundary_tag"] == TAG_OBSTACLE
    a, _, _ = shell2.face_geometry(f["boundary_tri"][sel], f["boundary_sub"][sel])
    assert abs(area - a.sum()) < 1e-12
    assert area < 4.0 * math.pi * 0.25
    assert area > 0.85 * 4.0 * math.pi * 0.25
    # load is supported on obstacle dofs only
    mask = np.zeros(dofmap.ndof, bool)
    mask[dofmap.boundary_dofs[TAG_OBSTACLE]] = True
    assert np.all(load[~mask] == 0.0)


def test_trace_continuity_across_transitional_faces():
    # the P1 space is conforming: evaluating u from either side of any
    # interior face gives the same value
    forest, _ = generate_shell_mesh(0.5, 1.0, 2)
    leaves = forest.leaf_ids()
    forest.refine(leaves[::6], defer_boundary=False)
    lm = meshmod.build_closure(forest)
    dofmap = assembly.DofMap(lm)
    rng = np.random.default_rng(9)
    u = rng.standard_normal(dofmap.ndof)
    f = lm.faces
    tri = f["interior_tri"]
    subs = f["interior_subs"]
    take = rng.choice(len(tri), size=20, replace=False)
    for k in take:
        a, b, c = tri[k]
        lam = rng.dirichlet(np.ones(3))
        pt = lam @ lm.xyz[[a, b, c]]
        vals = []
        for s in subs[k]:
            verts = lm.subtets[s]
            T = np.column_stack([lm.xyz[verts], np.ones(4)])
            bary = np.linalg.solve(T.T, np.append(pt, 1.0))
            vals.append(float(bary @ u[dofmap.sub_dofs[s]]))
        assert abs(vals[0] - vals[1]) < 1e-12


def test_boundary_coupling_shape(shell2_system):
    dofmap, system = shell2_system
    nh = specfun.harmonic_count(system.n_trunc)
    assert system.C.shape == (len(system.bdofs), nh)
    assert len(system.theta_rep) == nh
    assert set(system.bdofs) == set(dofmap.boundary_dofs[TAG_OUTER])
