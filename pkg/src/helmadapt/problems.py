"""Built-in scattering problems.

Example 1: sound-hard sphere of radius 0.5, data chosen so the exact
solution is the radiating monopole u = e^{i kappa r}/r; DtN sphere R = 1.

Example 2: plane wave e^{i kappa x3} scattering off a U-shaped obstacle
inside the box [-0.25, 0.25]^3, R = 1, R' = sqrt(3)/4.  The obstacle is
polyhedral: a 0.5^3 block with a slot of width 0.2 (|x1| <= 0.1) and
depth 0.35 (x3 >= -0.1) cut through the full x2 extent.
"""

import importlib.resources
import math

import numpy as np

from . import fileio, mesh as meshmod
from .adapt import Problem
from .mesh import TAG_OBSTACLE, TAG_OUTER, HgtForest

EXAMPLE2_MSH = "example2_u_obstacle.msh"


def boundary_data_example1(kappa):
    """g = -d/dr (e^{i kappa r}/r) evaluated at the actual point radius."""

    def g(points, normals):
        r = np.linalg.norm(points, axis=1)
        return -np.exp(1j * kappa * r) * (1j * kappa * r - 1.0) / r ** 2

    return g


def exact_gradient_example1(kappa):
    """Gradient of the radiating monopole e^{i kappa r}/r."""

    def grad(points):
        r = np.linalg.norm(points, axis=1)
        du = np.exp(1j * kappa * r) * (1j * kappa * r - 1.0) / r ** 2
        return (du / r)[:, None] * points

    return grad


def exact_solution_example1(kappa):
    def u(points):
        r = np.linalg.norm(points, axis=1)
        return np.exp(1j * kappa * r) / r

    return u


def boundary_data_example2(kappa):
    """g = d(u_inc)/d(nu) = i kappa nu_3 e^{i kappa x3}, nu out of D."""

    def g(points, normals):
        return 1j * kappa * normals[:, 2] * np.exp(1j * kappa * points[:, 2])

    return g


def example1(kappa=math.pi, resolution=3):
    forest, _ = meshmod.generate_shell_mesh(0.5, 1.0, resolution)
    projector = meshmod.SurfaceProjector(1.0, obstacle_radius=0.5)
    return Problem(
        forest,
        kappa=kappa,
        radius=1.0,
        radius_src=0.5,
        g=boundary_data_example1(kappa),
        projector=projector,
        grad_exact=exact_gradient_example1(kappa),
    )


def example2(kappa=math.pi, mesh_path=None):
    if mesh_path is None:
        res = importlib.resources.files("helmadapt").joinpath(
            "data", EXAMPLE2_MSH
        )
        with importlib.resources.as_file(res) as p:
            forest = fileio.read_msh(str(p))
    else:
        forest = fileio.read_msh(mesh_path)
    projector = meshmod.SurfaceProjector(1.0)  # polyhedral obstacle: no projection
    return Problem(
        forest,
        kappa=kappa,
        radius=1.0,
        radius_src=math.sqrt(3.0) / 4.0,
        g=boundary_data_example2(kappa),
        projector=projector,
    )


# ---------------------------------------------------------------------------
# Example-2 mesh construction (used to generate the packaged fixture)
# ---------------------------------------------------------------------------


def build_example2_mesh(radius=1.0, core_cells=10, shell_layers=5):
    """Tetrahedral mesh of B_radius minus the U-shaped obstacle.

    The core box [-0.25, 0.25]^3 is meshed by a core_cells^3 hex lattice;
    lattice cells inside the slot belong to the domain, the rest form the
    obstacle.  A cube-sphere shell (6 patches matching the lattice on the
    box surface, shell_layers radial layers with straight-line blending
    from the box to the sphere) fills the rest of the ball.  Hexahedra are
    split into 6 tets with a seam-consistent rule.  Returns (xyz, tets,
    tagged_faces) suitable for fileio.write_msh.
    """
    k = int(core_cells)
    if k % 10 != 0:
        raise ValueError("core_cells must be a multiple of 10 to hit the slot planes")
    h = 0.5 / k
    half = 0.25
    verts = []
    vid = {}

    def vertex(p):
        key = tuple(int(round(c * 1e9)) for c in p)
        if key in vid:
            return vid[key]
        i = len(verts)
        verts.append(tuple(p))
        vid[key] = i
        return i

    def in_slot(ci, cj, ck):
        """Does lattice cell (ci, cj, ck) lie in the slot (domain)?"""
        x1 = -half + (ci + 0.5) * h
        x3 = -half + (ck + 0.5) * h
        return abs(x1) < 0.1 and x3 > -0.1

    tets = []
    faces = []  # (tag, tri)

    def add_hex(corners):
        for t in meshmod._hex_to_tets(np.array(corners, dtype=np.int64)):
            tets.append(t)

    def add_quad(tag, quad):
        for tri in meshmod._quad_triangles(quad):
            faces.append((tag, tri))

    def lat(i, j, kk):
        return vertex((-half + i * h, -half + j * h, -half + kk * h))

    # slot cells of the core lattice
    slot = np.zeros((k, k, k), dtype=bool)
    for ci in range(k):
        for cj in range(k):
            for ck in range(k):
                slot[ci, cj, ck] = in_slot(ci, cj, ck)
    for ci in range(k):
        for cj in range(k):
            for ck in range(k):
                if not slot[ci, cj, ck]:
                    continue
                c = [
                    lat(ci, cj, ck),
                    lat(ci + 1, cj, ck),
                    lat(ci, cj + 1, ck),
                    lat(ci + 1, cj + 1, ck),
                    lat(ci, cj, ck + 1),
                    lat(ci + 1, cj, ck + 1),
                    lat(ci, cj + 1, ck + 1),
                    lat(ci + 1, cj + 1, ck + 1),
                ]
                # slot walls: neighbors inside the core that are obstacle
                for (di, dj, dk, corner_ids) in (
                    (-1, 0, 0, (c[0], c[2], c[6], c[4])),
                    (1, 0, 0, (c[1], c[3], c[7], c[5])),
                    (0, -1, 0, (c[0], c[1], c[5], c[4])),
                    (0, 1, 0, (c[2], c[3], c[7], c[6])),
                    (0, 0, -1, (c[0], c[1], c[3], c[2])),
                    (0, 0, 1, (c[4], c[5], c[7], c[6])),
                ):
                    ni, nj, nk = ci + di, cj + dj, ck + dk
                    inside = 0 <= ni < k and 0 <= nj < k and 0 <= nk < k
                    if inside and not slot[ni, nj, nk]:
                        add_quad(TAG_OBSTACLE, list(corner_ids))
                add_hex(c)
    # shell: 6 cube-sphere patches matching the lattice on the box surface
    axes = [(axis, sign) for axis in range(3) for sign in (-1.0, 1.0)]
    L = int(shell_layers)

    def shell_vertex(p_box, layer):
        p_box = np.asarray(p_box)
        p_sph = p_box * (radius / np.linalg.norm(p_box))
        t = layer / L
        return vertex(tuple(p_box + t * (p_sph - p_box)))

    for axis, sign in axes:
        for i in range(k):
            for j in range(k):
                quads = []
                for (ii, jj) in ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)):
                    p = [0.0, 0.0, 0.0]
                    p[axis] = sign * half
                    p[(axis + 1) % 3] = -half + ii * h
                    p[(axis + 2) % 3] = -half + jj * h
                    quads.append(p)
                for l in range(L):
                    c = [shell_vertex(p, l) for p in quads] + [
                        shell_vertex(p, l + 1) for p in quads
                    ]
                    add_hex(c)
                base = [vertex(tuple(p)) for p in quads]
                # box-surface quads over the obstacle (not over the slot
                # opening) are obstacle boundary
                cells_below = _surface_cell(axis, sign, i, j, k)
                if not slot[cells_below]:
                    add_quad(TAG_OBSTACLE, [base[0], base[1], base[3], base[2]])
                top = [shell_vertex(p, L) for p in quads]
                add_quad(TAG_OUTER, [top[0], top[1], top[3], top[2]])
    return np.array(verts), np.array(tets, dtype=np.int64), faces


def _surface_cell(axis, sign, i, j, k):
    """Core lattice cell adjacent to surface quad (i, j) of a cube patch."""
    idx = [0, 0, 0]
    idx[axis] = k - 1 if sign > 0 else 0
    idx[(axis + 1) % 3] = i
    idx[(axis + 2) % 3] = j
    return tuple(idx)


def write_example2_fixture(path, **kw):
    """Generate the packaged Example-2 mesh file."""
    xyz, tets, faces = build_example2_mesh(**kw)
    fileio.write_msh(path, xyz, tets, faces)
