"""Spherical Bessel/Hankel functions, associated Legendre functions,
spherical harmonics, and the DtN coefficients Theta_n.

Conventions
-----------
* h_n = j_n + i y_n (first kind).
* Associated Legendre P_n^m(t) = (1-t^2)^{m/2} d^m/dt^m P_n(t), i.e. no
  Condon-Shortley sign.
* Y_n^m(theta, phi) = sqrt((2n+1)(n-|m|)! / (4 pi (n+|m|)!))
  * P_n^{|m|}(cos theta) * exp(i m phi), so that Y_n^{-m} = conj(Y_n^m)
  and the Y_n^m are orthonormal on the unit sphere.

Evaluation strategy: j_n by downward (Miller) recurrence normalized at
j_0 = sin(z)/z (j is the recessive solution going up); y_n by upward
recurrence (dominant).  Theta_n uses the ratio identity
Theta_n = z h_{n-1}/h_n - (n+1), with Theta_0 = i z - 1 in closed form.
"""

import math

import numpy as np

_OVERFLOW_LIMIT = 1e300


class SpecFunError(ValueError):
    """Domain or overflow error in a special-function evaluation."""


def _check_z(z):
    if not np.isfinite(z) or z <= 0.0:
        raise SpecFunError(f"argument must be a positive finite real, got {z!r}")


def spherical_bessel_j(n_max, z):
    """j_0(z)..j_{n_max}(z) by downward Miller recurrence."""
    _check_z(z)
    if n_max < 0:
        raise SpecFunError("n_max must be >= 0")
    j0 = math.sin(z) / z
    if n_max == 0:
        return np.array([j0])
    j1 = math.sin(z) / z**2 - math.cos(z) / z
    # start well above n_max so the downward recurrence has forgotten the
    # admixture of y by the time it reaches n_max
    start = n_max + 15 + int(2.0 * math.sqrt(n_max) + z)
    jp = 0.0
    jc = 1e-30
    out = np.empty(n_max + 1)
    for n in range(start, 0, -1):
        jm = (2 * n + 1) / z * jc - jp
        jp = jc
        jc = jm
        if n - 1 <= n_max:
            out[n - 1] = jc
        if abs(jc) > 1e250:
            jc *= 1e-250
            jp *= 1e-250
            if n - 1 <= n_max:
                out[n - 1 :] *= 1e-250
    # normalize at whichever closed-form anchor is larger: near a zero of
    # j_0 the recurrence value out[0] has no relative accuracy (its absolute
    # error scales with the largest sequence member), and j_0, j_1 are
    # never simultaneously small
    if abs(j1) > abs(j0):
        out *= j1 / out[1]
    else:
        out *= j0 / out[0]
    out[0] = j0
    out[1] = j1
    return out


def spherical_bessel_y(n_max, z):
    """y_0(z)..y_{n_max}(z) by upward recurrence (stable: y is dominant)."""
    _check_z(z)
    if n_max < 0:
        raise SpecFunError("n_max must be >= 0")
    out = np.empty(n_max + 1)
    out[0] = -math.cos(z) / z
    if n_max >= 1:
        out[1] = -math.cos(z) / z**2 - math.sin(z) / z
    for n in range(1, n_max):
        out[n + 1] = (2 * n + 1) / z * out[n] - out[n - 1]
        if abs(out[n + 1]) > _OVERFLOW_LIMIT:
            raise SpecFunError(
                f"y_n overflow at order {n + 1} for z = {z}; "
                "sequence not representable in double precision"
            )
    return out


def spherical_hankel1(n_max, z):
    """h_n^{(1)}(z) = j_n(z) + i y_n(z) for n = 0..n_max."""
    j = spherical_bessel_j(n_max, z)
    y = spherical_bessel_y(n_max, z)
    return j + 1j * y


def theta_coefficients(n_max, z):
    """DtN coefficients Theta_n(z) = z h_n'(z)/h_n(z) for n = 0..n_max.

    Uses h_n'(z) = h_{n-1}(z) - (n+1)/z h_n(z), so
    Theta_n = z h_{n-1}/h_n - (n+1); Theta_0 = i z - 1 exactly.
    """
    _check_z(z)
    if n_max < 0:
        raise SpecFunError("n_max must be >= 0")
    out = np.empty(n_max + 1, dtype=complex)
    out[0] = 1j * z - 1.0
    if n_max >= 1:
        h = spherical_hankel1(n_max, z)
        n = np.arange(1, n_max + 1)
        out[1:] = z * h[:-1] / h[1:] - (n + 1)
        # the imaginary part has the exact closed form
        #   Im Theta_n = 1 / (z |h_n|^2)
        # (from the cross identity j_n y_{n-1} - j_{n-1} y_n = 1/z^2),
        # which is strictly positive but underflows for large n at small z;
        # keep the sign structure by flooring at the smallest subnormal
        with np.errstate(over="ignore", under="ignore"):
            im = 1.0 / (z * (h[1:].real ** 2 + h[1:].imag ** 2))
        im = np.where(np.isfinite(im) & (im > 0.0), im, 5e-324)
        out[1:] = out[1:].real + 1j * im
    return out


def assoc_legendre(n_max, t):
    """Table P_n^m(t) for 0 <= m <= n <= n_max, no Condon-Shortley sign.

    t may be a scalar or 1-d array in [-1, 1].  Returns an array of shape
    (n_max+1, n_max+1) + t.shape with entry [n, m] = P_n^m(t) (zero for
    m > n).
    """
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-14):
        raise SpecFunError("assoc_legendre argument must satisfy |t| <= 1")
    t = np.clip(t, -1.0, 1.0)
    shape = (n_max + 1, n_max + 1) + t.shape
    P = np.zeros(shape)
    s = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    P[0, 0] = 1.0
    for m in range(1, n_max + 1):
        P[m, m] = (2 * m - 1) * s * P[m - 1, m - 1]
    for m in range(0, n_max + 1):
        if m + 1 <= n_max:
            P[m + 1, m] = (2 * m + 1) * t * P[m, m]
        for n in range(m + 2, n_max + 1):
            P[n, m] = ((2 * n - 1) * t * P[n - 1, m] - (n + m - 1) * P[n - 2, m]) / (
                n - m
            )
    return P


def harmonic_index(n, m):
    """Packed index of Y_n^m: blocks of size 2n+1, m running -n..n."""
    return n * n + n + m


def harmonic_count(n_max):
    return (n_max + 1) ** 2


def _norm_factors(n_max):
    """sqrt((2n+1)(n-m)!/(4 pi (n+m)!)) for 0 <= m <= n <= n_max."""
    fac = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        f = (2 * n + 1) / (4.0 * math.pi)
        fac[n, 0] = math.sqrt(f)
        for m in range(1, n + 1):
            f /= (n - m + 1) * (n + m)
            fac[n, m] = math.sqrt(f)
    return fac


def spherical_harmonic_table(n_max, theta, phi):
    """Y_n^m at directions (theta, phi) for all n <= n_max, |m| <= n.

    theta, phi: scalars or 1-d arrays of equal length.  Returns a complex
    array of shape ((n_max+1)^2,) + theta.shape, packed by harmonic_index.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    P = assoc_legendre(n_max, np.cos(theta))
    fac = _norm_factors(n_max)
    out = np.zeros((harmonic_count(n_max),) + theta.shape, dtype=complex)
    # e^{i m phi} for m = 0..n_max
    expf = np.exp(1j * np.multiply.outer(np.arange(n_max + 1), phi))
    for n in range(n_max + 1):
        for m in range(0, n + 1):
            val = fac[n, m] * P[n, m] * expf[m]
            out[harmonic_index(n, m)] = val
            if m > 0:
                out[harmonic_index(n, -m)] = np.conj(val)
    return out


def wronskian_residual(n_max, z):
    """max_n |j_n y_n' - j_n' y_n - 1/z^2| * z^2 over n <= n_max (diagnostic)."""
    j = spherical_bessel_j(n_max + 1, z)
    y = spherical_bessel_y(n_max + 1, z)
    n = np.arange(n_max + 1)
    jp = np.empty(n_max + 1)
    yp = np.empty(n_max + 1)
    jp[0] = -j[1] if n_max >= 0 else 0.0
    yp[0] = -y[1]
    if n_max >= 1:
        jp[1:] = j[:n_max] - (n[1:] + 1) / z * j[1 : n_max + 1]
        yp[1:] = y[:n_max] - (n[1:] + 1) / z * y[1 : n_max + 1]
    w = j[: n_max + 1] * yp - jp * y[: n_max + 1]
    return float(np.max(np.abs(w * z * z - 1.0)))
