"""Simplex quadrature: exactness on monomials and rule sanity."""

import math

import numpy as np
import pytest

from helmadapt import quadrature


def _monomial_integral(exponents):
    """Integral of prod(x_i^a_i) over the unit simplex in len(exponents) dims."""
    a = list(exponents)
    num = 1.0
    for ai in a:
        num *= math.factorial(ai)
    return num / math.factorial(sum(a) + len(a))


def _monomials(dim, degree):
    if dim == 2:
        return [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    return [
        (i, j, k)
        for i in range(degree + 1)
        for j in range(degree + 1 - i)
        for k in range(degree + 1 - i - j)
    ]


def _check_exactness(bary, w, dim, degree, tol=1e-13):
    # points are barycentric; cartesian coordinates on the reference
    # simplex (origin + unit vectors) are the trailing dim columns
    pts = bary[:, 1:]
    vol = 1.0 / math.factorial(dim)
    for expo in _monomials(dim, degree):
        vals = np.prod(pts ** np.asarray(expo), axis=1)
        got = vol * float(w @ vals)
        want = _monomial_integral(expo)
        assert abs(got - want) <= tol * max(1.0, abs(want)), (expo, got, want)


@pytest.mark.parametrize("degree", [1, 3, 5, 9, 11])
def test_collapsed_triangle_exactness(degree):
    pts, w = quadrature.collapsed_rule(2, degree)
    _check_exactness(pts, w, 2, degree)


@pytest.mark.parametrize("degree", [1, 2, 5, 7])
def test_collapsed_tet_exactness(degree):
    pts, w = quadrature.collapsed_rule(3, degree)
    _check_exactness(pts, w, 3, degree)


def test_collapsed_weights_positive_and_normalized():
    for dim in (2, 3):
        for degree in (3, 7, 9):
            bary, w = quadrature.collapsed_rule(dim, degree)
            assert np.all(w > 0)
            assert abs(w.sum() - 1.0) < 1e-14
            assert np.all(bary >= -1e-15)
            np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-14)


@pytest.mark.parametrize("dim,s", [(2, 2), (2, 4), (3, 2), (3, 3)])
def test_grundmann_moller_exactness(dim, s):
    pts, w = quadrature.grundmann_moller(dim, s)
    _check_exactness(pts, w, dim, 2 * s + 1, tol=1e-12)


def test_grundmann_moller_agrees_with_collapsed():
    # two independent constructions must integrate a smooth non-polynomial
    # integrand to matching accuracy
    f = lambda b: np.exp(b[:, 1] - 0.5 * b[:, 2])
    p1, w1 = quadrature.collapsed_rule(2, 11)
    p2, w2 = quadrature.grundmann_moller(2, 5)
    assert abs(float(w1 @ f(p1)) - float(w2 @ f(p2))) < 1e-10


def test_default_rules():
    pts, w = quadrature.triangle_rule()
    assert pts.shape[1] == 3 and np.all(w > 0)
    pts, w = quadrature.tet_rule()
    assert pts.shape[1] == 4 and np.all(w > 0)


def test_map_to_physical_affine():
    verts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 3.0, 0.0]])
    bary = np.array(
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1 / 3, 1 / 3, 1 / 3]]
    )
    xyz = quadrature.map_to_physical(bary, verts)
    np.testing.assert_allclose(xyz[0], verts[0])
    np.testing.assert_allclose(xyz[1], verts[1])
    np.testing.assert_allclose(xyz[2], verts[2])
    np.testing.assert_allclose(xyz[3], verts.mean(axis=0))
