"""Quadrature rules on simplices (triangles and tetrahedra).

Points are returned in barycentric coordinates and weights sum to 1, so
integrating f over a physical simplex K is  |K| * sum_q w_q f(x_q).

The default rules are collapsed-coordinate (Duffy) Gauss-Jacobi product
rules: all weights positive, so quadrature of |f|^2 is nonnegative.  The
Grundmann-Moller construction (symmetric, degree 2*s+1, but with negative
weights) is kept as an independent cross-check of the default rules.
"""

from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


def _compositions(total, parts):
    """All compositions of `total` into `parts` nonnegative integers."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


@lru_cache(maxsize=None)
def grundmann_moller(dim, s):
    """GM rule of degree 2*s+1 on the `dim`-simplex.

    Returns (bary, weights): bary has shape (npts, dim+1), weights sum to 1.
    """
    if dim < 1 or s < 0:
        raise ValueError("need dim >= 1 and s >= 0")
    d = 2 * s + 1
    pts = []
    wts = []
    for i in range(s + 1):
        t = d + dim - 2 * i
        coef = (-1.0) ** i * 2.0 ** (-2 * s) * float(t) ** d
        coef /= factorial(i) * factorial(d + dim - i)
        for beta in _compositions(s - i, dim + 1):
            pts.append([(2 * b + 1) / t for b in beta])
            wts.append(coef)
    bary = np.array(pts, dtype=float)
    w = np.array(wts, dtype=float)
    # GM weights sum to the unit-simplex volume 1/dim!; rescale to 1.
    w *= factorial(dim)
    return bary, w


def simplex_rule(dim, degree):
    """Smallest GM rule on the dim-simplex exact for polynomials of `degree`."""
    if degree < 1:
        degree = 1
    s = (degree - 1 + 1) // 2  # 2s+1 >= degree
    return grundmann_moller(dim, s)


def _gauss01(n, alpha):
    """Gauss rule on [0, 1] with weight (1-x)^alpha."""
    if alpha == 0:
        x, w = roots_legendre(n)
    else:
        x, w = roots_jacobi(n, alpha, 0.0)
        w = w / 2.0 ** alpha  # account for mapping the weight to [0, 1]
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def collapsed_rule(dim, degree):
    """Positive-weight Gauss product rule on the dim-simplex via the
    collapsed (Duffy) coordinate transform; exact for total degree
    <= degree.  Returns (bary, weights) with weights summing to 1."""
    n = degree // 2 + 1
    if dim == 2:
        u, wu = _gauss01(n, 1)  # absorbs the Jacobian factor (1-u)
        v, wv = _gauss01(n, 0)
        x = np.repeat(u, n)
        y = np.outer(1.0 - u, v).ravel()
        w = np.outer(wu, wv).ravel()
        bary = np.stack([1.0 - x - y, x, y], axis=1)
    elif dim == 3:
        u, wu = _gauss01(n, 2)  # Jacobian (1-u)^2 (1-v)
        v, wv = _gauss01(n, 1)
        t, wt = _gauss01(n, 0)
        x = np.repeat(u, n * n)
        y = np.repeat(np.outer(1.0 - u, v).ravel(), n)
        z = (np.outer(1.0 - u, 1.0 - v)[:, :, None] * t).ravel()
        w = (np.outer(wu, wv)[:, :, None] * wt).ravel()
        bary = np.stack([1.0 - x - y - z, x, y, z], axis=1)
    else:
        raise ValueError("collapsed rules implemented for dim 2 and 3")
    w = w / w.sum()  # normalize to unit total (simplex-volume scaled out)
    return bary, w


def triangle_rule(degree=9):
    """Barycentric points/weights on the triangle, default degree 9."""
    return collapsed_rule(2, degree)


def tet_rule(degree=5):
    """Barycentric points/weights on the tetrahedron, default degree 5."""
    return collapsed_rule(3, degree)


def map_to_physical(bary, vertices):
    """Map barycentric points to a physical simplex.

    vertices: (..., nverts, 3); bary: (npts, nverts).
    Returns points of shape (..., npts, 3).
    """
    return np.einsum("qv,...vk->...qk", bary, vertices)
