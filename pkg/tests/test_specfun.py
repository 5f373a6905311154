"""Special-function accuracy against extended-precision oracles."""

import math

import mpmath
import numpy as np
import pytest
import sympy

from helmadapt import specfun

mpmath.mp.dps = 50

Z_VALUES = [0.5, 1.0, math.pi, 10.0, 50.0]


def _mp_spherical_j(n, z):
    return mpmath.sqrt(mpmath.pi / (2 * z)) * mpmath.besselj(n + mpmath.mpf(1) / 2, z)


def _mp_spherical_y(n, z):
    return mpmath.sqrt(mpmath.pi / (2 * z)) * mpmath.bessely(n + mpmath.mpf(1) / 2, z)


@pytest.mark.parametrize("z", Z_VALUES)
def test_bessel_j_against_mpmath(z):
    got = specfun.spherical_bessel_j(50, z)
    want = np.array([float(_mp_spherical_j(n, z)) for n in range(51)])
    rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-300)
    assert rel.max() < 1e-10


@pytest.mark.parametrize("z", Z_VALUES)
def test_bessel_y_against_mpmath(z):
    got = specfun.spherical_bessel_y(50, z)
    want = np.array([float(_mp_spherical_y(n, z)) for n in range(51)])
    rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-300)
    assert rel.max() < 1e-10


@pytest.mark.parametrize("z", Z_VALUES)
def test_hankel_against_mpmath(z):
    got = specfun.spherical_hankel1(50, z)
    want = np.array(
        [complex(_mp_spherical_j(n, z) + 1j * _mp_spherical_y(n, z)) for n in range(51)]
    )
    rel = np.abs(got - want) / np.abs(want)
    assert rel.max() < 1e-10


@pytest.mark.parametrize("z", Z_VALUES)
def test_wronskian_identity(z):
    assert specfun.wronskian_residual(50, z) < 1e-12


def test_bessel_j_small_orders_exact_forms():
    z = 1.3
    j = specfun.spherical_bessel_j(2, z)
    assert j[0] == pytest.approx(math.sin(z) / z, rel=1e-14)
    assert j[1] == pytest.approx(math.sin(z) / z**2 - math.cos(z) / z, rel=1e-13)


def test_invalid_arguments_raise():
    with pytest.raises(specfun.SpecFunError):
        specfun.spherical_bessel_j(5, 0.0)
    with pytest.raises(specfun.SpecFunError):
        specfun.spherical_bessel_y(5, -1.0)
    with pytest.raises(specfun.SpecFunError):
        specfun.theta_coefficients(-1, 1.0)


@pytest.mark.parametrize("z", [math.pi / 2, math.pi, 2 * math.pi])
def test_theta_sign_properties(z):
    # impedance coefficients: real part <= -1/2, imaginary part > 0
    theta = specfun.theta_coefficients(100, z)
    assert np.all(theta.real <= -0.5 + 1e-12)
    assert np.all(theta.imag > 0.0)


def test_theta_order_zero_and_one():
    theta = specfun.theta_coefficients(1, 1.0)
    assert theta[0] == pytest.approx(-1.0 + 1.0j, abs=1e-15)
    # z h_0 / h_1 - 2 at z = 1 evaluates to -1.5 + 0.5i
    assert theta[1] == pytest.approx(-1.5 + 0.5j, abs=1e-13)


def test_theta_against_mpmath():
    from mpmath import mpc

    def mp_h(n, z):
        return _mp_spherical_j(n, z) + 1j * _mp_spherical_y(n, z)

    z = math.pi
    got = specfun.theta_coefficients(40, z)
    for n in range(1, 41):
        want = complex(z * mp_h(n - 1, z) / mp_h(n, z) - (n + 1))
        assert abs(got[n] - want) / abs(want) < 1e-11


def test_assoc_legendre_against_sympy():
    x = sympy.Symbol("x")
    ts = np.array([-0.9, -0.3, 0.0, 0.4, 0.77])
    P = specfun.assoc_legendre(6, ts)
    for n in range(7):
        for m in range(n + 1):
            # Condon-Shortley-free convention: strip sympy's (-1)^m
            expr = (-1) ** m * sympy.assoc_legendre(n, m, x)
            want = np.array([float(expr.subs(x, t)) for t in ts])
            np.testing.assert_allclose(P[n, m], want, rtol=1e-12, atol=1e-12)


def test_assoc_legendre_rejects_out_of_range():
    with pytest.raises(specfun.SpecFunError):
        specfun.assoc_legendre(3, np.array([1.5]))


def test_harmonic_index_packing():
    k = 0
    for n in range(6):
        for m in range(-n, n + 1):
            assert specfun.harmonic_index(n, m) == k
            k += 1
    assert specfun.harmonic_count(5) == 36


def test_harmonic_conjugation_symmetry():
    theta = np.array([0.3, 1.1, 2.0])
    phi = np.array([0.1, 2.5, 4.0])
    Y = specfun.spherical_harmonic_table(8, theta, phi)
    for n in range(9):
        for m in range(1, n + 1):
            np.testing.assert_allclose(
                Y[specfun.harmonic_index(n, -m)],
                np.conj(Y[specfun.harmonic_index(n, m)]),
                rtol=1e-13,
            )


def _sphere_quadrature(n_max):
    """Product rule exact for harmonics up to degree 2*n_max."""
    from scipy.special import roots_legendre

    n_theta = 2 * n_max + 2
    n_phi = 4 * n_max + 4
    t, wt = roots_legendre(n_theta)
    theta = np.arccos(t)
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    wphi = 2 * math.pi / n_phi
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    W = np.multiply.outer(wt * wphi, np.ones(n_phi))
    return TH.ravel(), PH.ravel(), W.ravel()


def test_harmonic_orthonormality():
    n_max = 20
    th, ph, w = _sphere_quadrature(n_max)
    Y = specfun.spherical_harmonic_table(n_max, th, ph)
    G = (Y * w) @ np.conj(Y.T)
    err = np.abs(G - np.eye(specfun.harmonic_count(n_max))).max()
    assert err < 1e-10
