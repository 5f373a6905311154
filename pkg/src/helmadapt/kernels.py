"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

Set HELMADAPT_NO_NUMBA=1 to force the numpy fallback path (used by the
benchmark in benchmarks/bench_kernels.py and as a safety hatch).
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("HELMADAPT_NO_NUMBA", "0") != "1"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

# local edge numbering of a tetrahedron (pairs of local vertices)
TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], dtype=np.int64)
# local face f contains the three edges whose midpoints make it a
# "refined face"; face f is opposite local vertex f
FACE_OF_VERTEX = np.array(
    [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)], dtype=np.int64
)
# edges belonging to each face (indices into TET_EDGES)
FACE_EDGES = np.array([(3, 4, 5), (1, 2, 5), (0, 2, 4), (0, 1, 3)], dtype=np.int64)

def _grads_vols_numpy(coords):
    """Barycentric gradients and signed volumes of tetrahedra.

    coords: (M, 4, 3).  Returns grads (M, 4, 3) and vols (M,).
    """
    e = coords[:, 1:, :] - coords[:, :1, :]  # (M,3,3) rows p1-p0,p2-p0,p3-p0
    vols = np.linalg.det(e) / 6.0
    inv = np.linalg.inv(e)  # columns are grad(lambda_1..3)
    g = np.transpose(inv, (0, 2, 1))  # (M,3,3) rows grad(lambda_i), i=1..3
    grads = np.empty_like(coords)
    grads[:, 1:, :] = g
    grads[:, 0, :] = -g.sum(axis=1)
    return grads, vols


def _local_matrices_numpy(coords):
    """P1 local stiffness/mass matrices for a batch of tetrahedra.

    Returns (S, M, vols): S and M of shape (M, 4, 4).  Degenerate cells
    (vol <= 0) yield nonsense entries; callers validate vols.
    """
    grads, vols = _grads_vols_numpy(coords)
    S = np.einsum("mik,mjk->mij", grads, grads) * vols[:, None, None]
    base = (np.ones((4, 4)) + np.eye(4)) / 20.0
    M = vols[:, None, None] * base
    return S, M, vols


if USE_NUMBA:

    @njit(cache=True)
    def _local_matrices_numba(coords):
        m = coords.shape[0]
        S = np.empty((m, 4, 4))
        Mm = np.empty((m, 4, 4))
        vols = np.empty(m)
        g = np.empty((4, 3))
        for c in range(m):
            a = coords[c]
            e10 = a[1] - a[0]
            e20 = a[2] - a[0]
            e30 = a[3] - a[0]
            det = (
                e10[0] * (e20[1] * e30[2] - e20[2] * e30[1])
                - e10[1] * (e20[0] * e30[2] - e20[2] * e30[0])
                + e10[2] * (e20[0] * e30[1] - e20[1] * e30[0])
            )
            vols[c] = det / 6.0
            # rows of inv(E) transposed: grad lambda_1..3
            g[1, 0] = (e20[1] * e30[2] - e20[2] * e30[1]) / det
            g[1, 1] = (e20[2] * e30[0] - e20[0] * e30[2]) / det
            g[1, 2] = (e20[0] * e30[1] - e20[1] * e30[0]) / det
            g[2, 0] = (e30[1] * e10[2] - e30[2] * e10[1]) / det
            g[2, 1] = (e30[2] * e10[0] - e30[0] * e10[2]) / det
            g[2, 2] = (e30[0] * e10[1] - e30[1] * e10[0]) / det
            g[3, 0] = (e10[1] * e20[2] - e10[2] * e20[1]) / det
            g[3, 1] = (e10[2] * e20[0] - e10[0] * e20[2]) / det
            g[3, 2] = (e10[0] * e20[1] - e10[1] * e20[0]) / det
            g[0, 0] = -(g[1, 0] + g[2, 0] + g[3, 0])
            g[0, 1] = -(g[1, 1] + g[2, 1] + g[3, 1])
            g[0, 2] = -(g[1, 2] + g[2, 2] + g[3, 2])
            v = vols[c]
            for i in range(4):
                for j in range(4):
                    S[c, i, j] = v * (
                        g[i, 0] * g[j, 0] + g[i, 1] * g[j, 1] + g[i, 2] * g[j, 2]
                    )
                    Mm[c, i, j] = v / 20.0 * (2.0 if i == j else 1.0)
        return S, Mm, vols


def local_matrices(coords):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if USE_NUMBA:
        return _local_matrices_numba(coords)
    return _local_matrices_numpy(coords)


def grads_vols(coords):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    return _grads_vols_numpy(coords)
