"""Hierarchy-geometry-tree (octree) tetrahedral mesh.

A forest of root tetrahedra is refined 1:8 (four corner tets plus four
tets splitting the interior octahedron along its shortest diagonal).
The active leaves are kept 2:1 balanced across faces; hanging midpoints
are absorbed by transitional macro-elements (twin- and four-tetrahedron
cells) when the conforming leaf mesh is extracted, so the resulting
collection of sub-tetrahedra is an ordinary conforming P1 mesh.

Boundary faces carry tags (OBSTACLE / OUTER).  Midpoints created on a
tagged surface are moved onto the analytic surface (radially, for
spheres) by project_boundary_midpoints; marked boundary leaves whose
boundary neighbors are not refined along are deferred to keep the
surface geometry consistent.
"""

import math

import numpy as np

from .kernels import TET_EDGES, FACE_OF_VERTEX

TAG_NONE = 0
TAG_OBSTACLE = 1
TAG_OUTER = 2

# closure cell kinds
KIND_PLAIN = 0  # no hanging midpoints, 1 sub-tet
KIND_TWIN = 1  # one refined edge, 2 sub-tets
KIND_FOUR = 2  # one fully refined face, 4 sub-tets
KIND_CHAIN = 3  # several refined edges, chained bisection

_FACES_LOCAL = FACE_OF_VERTEX  # face f is opposite local vertex f

_PACK_BITS = 21  # vertex ids packed 3-per-int64 for fast face keying


class MeshError(RuntimeError):
    pass


def _face_key(a, b, c):
    x, y, z = sorted((int(a), int(b), int(c)))
    return (x, y, z)


def _pack_faces(tri):
    """Pack sorted vertex triples (n, 3) into int64 keys."""
    tri = np.sort(tri, axis=1)
    return (
        (tri[:, 0].astype(np.int64) << (2 * _PACK_BITS))
        | (tri[:, 1].astype(np.int64) << _PACK_BITS)
        | tri[:, 2].astype(np.int64)
    )


class SurfaceProjector:
    """Projection rules for the obstacle and outer-sphere surfaces.

    obstacle_radius: radius of an analytic spherical obstacle, or None for
    a polyhedral (frozen) obstacle surface.  outer_radius: radius R of the
    DtN sphere; OUTER midpoints are always moved radially onto it.
    """

    def __init__(self, outer_radius, obstacle_radius=None):
        self.outer_radius = float(outer_radius)
        self.obstacle_radius = (
            None if obstacle_radius is None else float(obstacle_radius)
        )

    def target(self, xyz, tag):
        r = np.linalg.norm(xyz)
        if r == 0.0:
            return xyz
        if tag == TAG_OUTER:
            return xyz * (self.outer_radius / r)
        if tag == TAG_OBSTACLE and self.obstacle_radius is not None:
            return xyz * (self.obstacle_radius / r)
        return xyz


class HgtForest:
    """Octree forest over a pool of vertices.

    Node storage is flat: verts (n, 4) vertex ids, level, parent,
    child0 (index of the first of 8 contiguous children, -1 for leaves).
    """

    def __init__(self):
        self._xyz = np.empty((1024, 3))
        self._vtag = np.zeros(1024, dtype=np.int8)
        self.nverts = 0
        self._nv = np.empty((1024, 4), dtype=np.int64)
        self._nlevel = np.zeros(1024, dtype=np.int32)
        self._nparent = np.full(1024, -1, dtype=np.int32)
        self._nchild0 = np.full(1024, -1, dtype=np.int32)
        self.nnodes = 0
        self.edge_mid = {}  # (a, b) a<b -> midpoint id
        self.mid_parents = {}  # midpoint id -> (a, b)
        self.bface = {}  # sorted vertex triple -> tag
        self.pending_midpoints = []  # created since last projection
        self.deferred = []  # boundary leaves deferred at the last refine
        self.forced = 0  # leaves force-refined by closure fallback

    # -- storage ----------------------------------------------------------

    @property
    def xyz(self):
        return self._xyz[: self.nverts]

    @property
    def vtag(self):
        return self._vtag[: self.nverts]

    @property
    def node_verts(self):
        return self._nv[: self.nnodes]

    @property
    def node_level(self):
        return self._nlevel[: self.nnodes]

    @property
    def node_parent(self):
        return self._nparent[: self.nnodes]

    @property
    def node_child0(self):
        return self._nchild0[: self.nnodes]

    def _grow_verts(self, extra):
        need = self.nverts + extra
        if need <= self._xyz.shape[0]:
            return
        cap = max(need, 2 * self._xyz.shape[0])
        xyz = np.empty((cap, 3))
        xyz[: self.nverts] = self._xyz[: self.nverts]
        self._xyz = xyz
        vt = np.zeros(cap, dtype=np.int8)
        vt[: self.nverts] = self._vtag[: self.nverts]
        self._vtag = vt

    def _grow_nodes(self, extra):
        need = self.nnodes + extra
        if need <= self._nv.shape[0]:
            return
        cap = max(need, 2 * self._nv.shape[0])
        for name, fill in (
            ("_nv", 0),
            ("_nlevel", 0),
            ("_nparent", -1),
            ("_nchild0", -1),
        ):
            old = getattr(self, name)
            arr = np.full((cap,) + old.shape[1:], fill, dtype=old.dtype)
            arr[: self.nnodes] = old[: self.nnodes]
            setattr(self, name, arr)

    def add_vertex(self, xyz, tag=TAG_NONE):
        self._grow_verts(1)
        i = self.nverts
        self._xyz[i] = xyz
        self._vtag[i] = tag
        self.nverts += 1
        return i

    def add_root(self, verts):
        """Add a root tetrahedron, swapping two vertices if needed so the
        signed volume is positive."""
        v = list(int(x) for x in verts)
        if self._signed_volume(v) < 0.0:
            v[0], v[1] = v[1], v[0]
        if self._signed_volume(v) <= 0.0:
            raise MeshError(f"degenerate root tetrahedron {verts}")
        self._grow_nodes(1)
        i = self.nnodes
        self._nv[i] = v
        self._nlevel[i] = 0
        self._nparent[i] = -1
        self._nchild0[i] = -1
        self.nnodes += 1
        return i

    def tag_face(self, a, b, c, tag):
        self.bface[_face_key(a, b, c)] = tag

    def _signed_volume(self, v):
        p = self._xyz[list(v)]
        return float(np.linalg.det(p[1:] - p[0])) / 6.0

    def leaf_ids(self):
        return np.nonzero(self._nchild0[: self.nnodes] == -1)[0]

    # -- refinement -------------------------------------------------------

    def _midpoint(self, a, b):
        a, b = (a, b) if a < b else (b, a)
        m = self.edge_mid.get((a, b))
        if m is None:
            m = self.add_vertex(0.5 * (self._xyz[a] + self._xyz[b]))
            self.edge_mid[(a, b)] = m
            self.mid_parents[m] = (a, b)
            self.pending_midpoints.append(m)
        return m

    def subdivide(self, node):
        """Uniform 1:8 subdivision of a leaf node."""
        if self._nchild0[node] != -1:
            raise MeshError(f"node {node} is not a leaf")
        a, b, c, d = (int(x) for x in self._nv[node])
        mab = self._midpoint(a, b)
        mac = self._midpoint(a, c)
        mad = self._midpoint(a, d)
        mbc = self._midpoint(b, c)
        mbd = self._midpoint(b, d)
        mcd = self._midpoint(c, d)
        # shortest interior-octahedron diagonal
        xyz = self._xyz
        diags = (
            ((mab, mcd), (mac, mbc, mbd, mad)),
            ((mac, mbd), (mab, mbc, mcd, mad)),
            ((mad, mbc), (mab, mac, mcd, mbd)),
        )
        dlen = [np.sum((xyz[p] - xyz[q]) ** 2) for (p, q), _ in diags]
        (p, q), cyc = diags[int(np.argmin(dlen))]
        children = [
            (a, mab, mac, mad),
            (b, mab, mbc, mbd),
            (c, mac, mbc, mcd),
            (d, mad, mbd, mcd),
        ]
        for i in range(4):
            children.append((p, q, cyc[i], cyc[(i + 1) % 4]))
        self._grow_nodes(8)
        c0 = self.nnodes
        lvl = self._nlevel[node] + 1
        for i, ch in enumerate(children):
            v = list(ch)
            if self._signed_volume(v) < 0.0:
                v[0], v[1] = v[1], v[0]
            self._nv[c0 + i] = v
            self._nlevel[c0 + i] = lvl
            self._nparent[c0 + i] = node
            self._nchild0[c0 + i] = -1
        self.nnodes += 8
        self._nchild0[node] = c0
        # propagate boundary tags to the four quarters of each tagged face
        mids = {
            (a, b): mab,
            (a, c): mac,
            (a, d): mad,
            (b, c): mbc,
            (b, d): mbd,
            (c, d): mcd,
        }

        def mid(x, y):
            return mids[(x, y) if (x, y) in mids else (y, x)]

        for fx, fy, fz in ((a, b, c), (a, b, d), (a, c, d), (b, c, d)):
            tag = self.bface.get(_face_key(fx, fy, fz))
            if tag is None:
                continue
            m1, m2, m3 = mid(fx, fy), mid(fx, fz), mid(fy, fz)
            for tri in ((fx, m1, m2), (fy, m1, m3), (fz, m2, m3), (m1, m2, m3)):
                self.bface[_face_key(*tri)] = tag
            for m in (m1, m2, m3):
                self._vtag[m] = tag
        return c0

    # -- adjacency over leaves ---------------------------------------------

    def _leaf_face_tables(self, leaves):
        """Packed face keys of all leaf faces.

        Returns (keys (L, 4), order, sorted_keys) with order/sorted_keys the
        global sort used for searchsorted lookups.  Each row of keys follows
        the local face numbering (face f opposite vertex f).
        """
        if self.nverts >= (1 << _PACK_BITS):
            raise MeshError("vertex pool exceeds face-key packing capacity")
        lv = self._nv[leaves]
        keys = np.empty((len(leaves), 4), dtype=np.int64)
        for f in range(4):
            keys[:, f] = _pack_faces(lv[:, _FACES_LOCAL[f]])
        flat = keys.ravel()
        order = np.argsort(flat, kind="stable")
        return keys, order, flat[order]

    def _lift_faces(self, tri):
        """Attempt to lift leaf faces one level (quarter -> parent face).

        tri: (n, 3) vertex ids.  Returns packed keys of lifted faces, -1
        where the face is not a quarter of a coarser face.
        """
        n = tri.shape[0]
        if n == 0:
            return np.empty(0, dtype=np.int64)
        mp = np.full((self.nverts, 2), -1, dtype=np.int64)
        if self.mid_parents:
            mids = np.fromiter(self.mid_parents.keys(), dtype=np.int64)
            pars = np.array([self.mid_parents[m] for m in mids], dtype=np.int64)
            mp[mids] = pars
        P = mp[tri]  # (n, 3, 2)
        is_mid = P[:, :, 0] >= 0
        out = np.full(n, -1, dtype=np.int64)
        # center quarter: all three are midpoints and their parents form
        # three distinct vertices, each shared by two of the midpoints
        allm = is_mid.all(axis=1)
        if allm.any():
            six = np.sort(P[allm].reshape(-1, 6), axis=1)
            ok = (
                (six[:, 0] == six[:, 1])
                & (six[:, 2] == six[:, 3])
                & (six[:, 4] == six[:, 5])
                & (six[:, 1] < six[:, 2])
                & (six[:, 3] < six[:, 4])
            )
            lifted = _pack_faces(six[:, (0, 2, 4)])
            idx = np.nonzero(allm)[0]
            out[idx[ok]] = lifted[ok]
        # corner quarter: vertex v plus midpoints of two edges at v
        for t in range(3):
            m1 = (t + 1) % 3
            m2 = (t + 2) % 3
            v = tri[:, t]
            cand = (
                (out == -1)
                & is_mid[:, m1]
                & is_mid[:, m2]
                & ((P[:, m1, 0] == v) | (P[:, m1, 1] == v))
                & ((P[:, m2, 0] == v) | (P[:, m2, 1] == v))
            )
            if not cand.any():
                continue
            o1 = P[cand, m1, 0] + P[cand, m1, 1] - v[cand]
            o2 = P[cand, m2, 0] + P[cand, m2, 1] - v[cand]
            lifted = _pack_faces(np.stack([v[cand], o1, o2], axis=1))
            out[np.nonzero(cand)[0]] = lifted
        return out

    def leaf_adjacency(self, leaves):
        """Face adjacency among leaves.

        Returns (same, coarse): `same` is an (m, 2) array of leaf-index
        pairs sharing an identical face; `coarse` is an (m2, 2) array of
        (finer leaf index, coarser leaf index) pairs adjacent across a
        refined face.
        """
        keys, order, skeys = self._leaf_face_tables(leaves)
        flat = keys.ravel()
        uniq, inv, counts = np.unique(flat, return_inverse=True, return_counts=True)
        if np.any(counts == 2):
            # order faces by key; paired faces are consecutive
            pos = np.argsort(inv, kind="stable")
            starts = np.cumsum(counts) - counts
            two = np.nonzero(counts == 2)[0]
            a = pos[starts[two]] // 4
            b = pos[starts[two] + 1] // 4
            same = np.stack([a, b], axis=1)
        else:
            same = np.empty((0, 2), dtype=np.int64)
        if np.any(counts > 2):
            raise MeshError("face shared by more than two leaves")
        # faces with count 1 that lift onto an existing leaf face -> the
        # lifted face's owner is the coarser neighbor
        ones = np.nonzero(counts[inv] == 1)[0]
        lv = self._nv[leaves]
        # per-face vertex triples in row-major (leaf, face) order
        tri_all = np.concatenate(
            [lv[:, _FACES_LOCAL[f]][:, None, :] for f in range(4)], axis=1
        ).reshape(-1, 3)
        lifted = self._lift_faces(tri_all[ones])
        has = lifted >= 0
        coarse = np.empty((0, 2), dtype=np.int64)
        if has.any():
            li = np.searchsorted(skeys, lifted[has])
            li = np.clip(li, 0, len(skeys) - 1)
            hit = skeys[li] == lifted[has]
            fine_face = ones[has][hit]
            coarse_face = order[li[hit]]
            coarse = np.stack([fine_face // 4, coarse_face // 4], axis=1)
        return same, coarse

    # -- refine with deferral and 2:1 balance -------------------------------

    def _leaf_has_tag(self, node, tag):
        v = self._nv[node]
        for f in range(4):
            key = _face_key(*v[_FACES_LOCAL[f]])
            if self.bface.get(key) == tag:
                return True
        return False

    def _leaf_tags(self, node):
        v = self._nv[node]
        tags = set()
        for f in range(4):
            t = self.bface.get(_face_key(*v[_FACES_LOCAL[f]]))
            if t:
                tags.add(t)
        return tags

    def refine(self, marked, defer_boundary=True):
        """Subdivide the marked leaves, restoring 2:1 balance.

        Marked boundary leaves whose boundary-patch face-neighbors are not
        also marked (or finer) are deferred (recorded in self.deferred).
        Returns the list of node ids actually subdivided.
        """
        marked = sorted(set(int(m) for m in marked))
        self.deferred = []
        if not marked:
            return []
        leaves = self.leaf_ids()
        is_leaf = np.zeros(self.nnodes, dtype=bool)
        is_leaf[leaves] = True
        for m in marked:
            if not is_leaf[m]:
                raise MeshError(f"marked id {m} is not a current leaf")
        leaf_index = {int(l): i for i, l in enumerate(leaves)}
        same, coarse = self.leaf_adjacency(leaves)
        nbrs = {}  # leaf index -> neighbor leaf indices

        def _add(a, b):
            nbrs.setdefault(a, []).append(b)
            nbrs.setdefault(b, []).append(a)

        for a, b in same:
            _add(int(a), int(b))
        for f, c in coarse:
            _add(int(f), int(c))

        if defer_boundary:
            marked_set = set(marked)
            kept = []
            for m in marked:
                tags = self._leaf_tags(m)
                if not tags:
                    kept.append(m)
                    continue
                ok = True
                mi = leaf_index[m]
                for nb in nbrs.get(mi, []):
                    node = int(leaves[nb])
                    nb_tags = self._leaf_tags(node)
                    if not (nb_tags & tags):
                        continue
                    if node in marked_set or self._nlevel[node] > self._nlevel[m]:
                        continue
                    ok = False
                    break
                if ok:
                    kept.append(m)
                else:
                    self.deferred.append(m)
            marked = kept
            if not marked:
                return []

        # 2:1 balance closure over the static coarse-fine adjacency
        coarser_of = {}  # leaf index -> coarser neighbor leaf indices
        for f, c in coarse:
            coarser_of.setdefault(int(f), []).append(int(c))
        split = set(leaf_index[m] for m in marked)
        stack = list(split)
        while stack:
            k = stack.pop()
            for c in coarser_of.get(k, []):
                if c not in split:
                    split.add(c)
                    stack.append(c)
        # also: splitting a leaf makes it one level finer than same-level
        # neighbors; that is fine (diff 1).  But a split leaf whose
        # same-face neighbor is one level coarser is exactly the coarse
        # pairs handled above.
        for k in sorted(split):
            self.subdivide(int(leaves[k]))
        return [int(leaves[k]) for k in sorted(split)]

    # -- boundary projection -------------------------------------------------

    def project_boundary_midpoints(self, projector):
        """Move pending boundary midpoints onto their analytic surfaces.

        Vertices whose projection would invert an adjacent leaf tetrahedron
        are rolled back; their count is returned as (projected, rolled_back).
        """
        moved = []
        old = {}
        for m in self.pending_midpoints:
            tag = int(self._vtag[m])
            if tag == TAG_NONE:
                continue
            target = projector.target(self._xyz[m].copy(), tag)
            if not np.allclose(target, self._xyz[m]):
                old[m] = self._xyz[m].copy()
                self._xyz[m] = target
                moved.append(m)
        self.pending_midpoints = []
        if not moved:
            return 0, 0
        # verify leaf volumes; roll back offending projected vertices
        leaves = self.leaf_ids()
        rolled = 0
        for _ in range(len(moved)):
            lv = self._nv[leaves]
            p = self._xyz[lv]
            vols = np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0
            bad = vols <= 0.0
            if not bad.any():
                break
            bad_verts = set(np.unique(lv[bad]).tolist()) & set(moved)
            if not bad_verts:
                raise MeshError("negative volume not caused by projection")
            for m in bad_verts:
                self._xyz[m] = old[m]
                moved.remove(m)
                rolled += 1
        return len(moved), rolled

    # -- volumes -------------------------------------------------------------

    def node_volumes(self, ids):
        p = self._xyz[self._nv[ids]]
        return np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0

    def total_leaf_volume(self):
        return float(self.node_volumes(self.leaf_ids()).sum())


class LeafMesh:
    """The active conforming mesh: plain cells plus transitional cells,
    decomposed into sub-tetrahedra forming a conforming P1 mesh."""

    def __init__(self, forest, cell_nodes, kinds, subtets, sub_owner):
        self.forest = forest
        self.xyz = forest.xyz
        self.cell_nodes = cell_nodes  # node ids, one per cell
        self.cell_kind = kinds
        self.subtets = subtets  # (Msub, 4) global vertex ids
        self.sub_owner = sub_owner  # (Msub,) cell index
        self.ncells = len(cell_nodes)
        p = self.xyz[subtets]
        self.sub_vols = np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0
        if np.any(self.sub_vols <= 0.0):
            raise MeshError("non-positive sub-tetrahedron volume in leaf mesh")
        self._faces = None
        self._h_cell = None

    # -- faces ---------------------------------------------------------------

    def _build_faces(self):
        tri = np.concatenate(
            [self.subtets[:, _FACES_LOCAL[f]][:, None, :] for f in range(4)],
            axis=1,
        ).reshape(-1, 3)
        keys = _pack_faces(tri)
        order = np.argsort(keys, kind="stable")
        sk = keys[order]
        uniq, start = np.unique(sk, return_index=True)
        counts = np.diff(np.append(start, len(sk)))
        if np.any(counts > 2):
            raise MeshError("face shared by more than two sub-tetrahedra")
        int_sel = counts == 2
        bnd_sel = counts == 1
        int_first = start[int_sel]
        interior_subs = np.stack(
            [order[int_first] // 4, order[int_first + 1] // 4], axis=1
        )
        interior_tri = np.sort(tri[order[int_first]], axis=1)
        bnd_idx = order[start[bnd_sel]]
        boundary_tri = np.sort(tri[bnd_idx], axis=1)
        boundary_sub = bnd_idx // 4
        tags = np.empty(len(boundary_tri), dtype=np.int8)
        for i, t in enumerate(boundary_tri):
            tag = self._resolve_tag(tuple(int(x) for x in t))
            if tag is None:
                raise MeshError(
                    f"untagged boundary face {tuple(t)}: mesh is not conforming"
                )
            tags[i] = tag
        self._faces = {
            "interior_tri": interior_tri,
            "interior_subs": interior_subs,
            "boundary_tri": boundary_tri,
            "boundary_sub": boundary_sub,
            "boundary_tag": tags,
        }

    def _resolve_tag(self, tri, depth=0, _seen=None):
        tag = self.forest.bface.get(_face_key(*tri))
        if tag is not None or depth >= 6:
            return tag
        if _seen is None:
            _seen = set()
        key = _face_key(*tri)
        if key in _seen:
            return None
        _seen.add(key)
        mp = self.forest.mid_parents
        # half-lift: a transitional sub-face may be half of a registered
        # face; replace a midpoint with its missing parent
        for i, v in enumerate(tri):
            par = mp.get(v)
            if par is None:
                continue
            a, b = par
            rest = [tri[j] for j in range(3) if j != i]
            if a in rest and b not in rest:
                cand = (rest[0], rest[1], b)
            elif b in rest and a not in rest:
                cand = (rest[0], rest[1], a)
            else:
                continue
            tag = self._resolve_tag(cand, depth + 1, _seen)
            if tag is not None:
                return tag
        # medial lift: the center quarter (m_ab, m_bc, m_ca) of a face that
        # was never quartered by a real subdivision; no vertex shares a
        # parent with the triangle, so half-lifts cannot reach (a, b, c)
        pars = [mp.get(v) for v in tri]
        if all(p is not None for p in pars):
            corners = set(pars[0]) | set(pars[1]) | set(pars[2])
            if len(corners) == 3 and all(len(set(p)) == 2 for p in pars):
                pairs = {frozenset(p) for p in pars}
                if len(pairs) == 3:
                    return self._resolve_tag(tuple(sorted(corners)), depth + 1, _seen)
        return None

    @property
    def faces(self):
        if self._faces is None:
            self._build_faces()
        return self._faces

    # -- sizes ---------------------------------------------------------------

    def cell_dof_ids(self, c):
        """Vertex ids carrying DoFs of cell c (4, 5 or 7 ids)."""
        sel = self.sub_owner == c
        return np.unique(self.subtets[sel])

    def cell_diameters(self):
        """h_K per cell: diameter of the cell's vertex set."""
        if self._h_cell is not None:
            return self._h_cell
        h = np.zeros(self.ncells)
        # all sub-tet edges, attributed to owners (diameter is realized on
        # the corner vertices, which are sub-tet vertices)
        p = self.xyz[self.subtets]
        for c in range(self.ncells):
            sel = self.sub_owner == c
            vid = np.unique(self.subtets[sel])
            q = self.xyz[vid]
            d2 = np.sum((q[:, None, :] - q[None, :, :]) ** 2, axis=-1)
            h[c] = math.sqrt(float(d2.max()))
        self._h_cell = h
        return h

    def cell_diameters_fast(self):
        """h_K per cell via the max sub-tet edge: exact for plain cells,
        within a factor 2 of the diameter for transitional cells (a split
        macro edge is only seen through its halves)."""
        if self._h_cell is not None:
            return self._h_cell
        p = self.xyz[self.subtets]
        emax = np.zeros(len(self.subtets))
        for (i, j) in TET_EDGES:
            d = np.linalg.norm(p[:, i] - p[:, j], axis=1)
            np.maximum(emax, d, out=emax)
        h = np.zeros(self.ncells)
        np.maximum.at(h, self.sub_owner, emax)
        self._h_cell = h
        return h

    def face_geometry(self, tri, sub):
        """Areas, unit normals (outward from the given sub-tet) and
        diameters h_F for the faces `tri` adjacent to sub-tets `sub`."""
        p = self.xyz[tri]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        nvec = np.cross(e1, e2)
        area = 0.5 * np.linalg.norm(nvec, axis=1)
        n = nvec / (2.0 * area)[:, None]
        fc = p.mean(axis=1)
        tc = self.xyz[self.subtets[sub]].mean(axis=1)
        flip = np.einsum("ij,ij->i", n, fc - tc) < 0
        n[flip] *= -1.0
        hf = np.maximum(
            np.linalg.norm(e1, axis=1),
            np.maximum(np.linalg.norm(e2, axis=1), np.linalg.norm(p[:, 2] - p[:, 1], axis=1)),
        )
        return area, n, hf

    def total_volume(self):
        return float(self.sub_vols.sum())


def _decompose_cell(verts, edge_mid):
    """Conforming sub-tet decomposition of one leaf with hanging midpoints.

    A fully refined face (all 3 edge midpoints present, and no other
    midpoints) is split into the standard four sub-tets (three corner tets
    plus the center tet with apex at the opposite vertex) so that the face
    matches a 1:8-refined neighbor's quartering.  Any other configuration
    without a fully refined face is resolved by chained bisection: split
    through the refined edge with the smallest (min_id, max_id) key, which
    both cells sharing a face evaluate identically, then recurse.  A single
    midpoint gives exactly the twin cell (two sub-tets).

    Returns (kind, subtets) or (None, None) when the leaf itself must be
    refined (more than one fully refined face, or a full face plus extra
    midpoints, whose face splits cannot be made consistent).
    """

    def mids_of(tet):
        out = []
        for i in range(3):
            for j in range(i + 1, 4):
                a, b = tet[i], tet[j]
                key = (a, b) if a < b else (b, a)
                m = edge_mid.get(key)
                if m is not None:
                    out.append((key, i, j, m))
        return out

    def bisect(tet, depth, out):
        ms = mids_of(tet)
        if not ms:
            out.append(tet)
            return True
        if depth <= 0:
            return False
        _, i, j, m = min(ms)
        rest = [tet[t] for t in range(4) if t != i and t != j]
        return bisect((tet[i], m, rest[0], rest[1]), depth - 1, out) and bisect(
            (m, tet[j], rest[0], rest[1]), depth - 1, out
        )

    v = tuple(int(x) for x in verts)
    ms = mids_of(v)
    if not ms:
        return KIND_PLAIN, [v]
    mid_of = {key: m for key, _, _, m in ms}

    def get(a, b):
        return mid_of.get((a, b) if a < b else (b, a))

    full = []
    for f in range(4):
        j, k, l = (v[t] for t in _FACES_LOCAL[f])
        if get(j, k) is not None and get(j, l) is not None and get(k, l) is not None:
            full.append(f)
    if full:
        if len(full) > 1 or len(ms) != 3:
            return None, None
        f = full[0]
        i = v[f]  # apex opposite the refined face
        j, k, l = (v[t] for t in _FACES_LOCAL[f])
        m_jk, m_jl, m_kl = get(j, k), get(j, l), get(k, l)
        out = []
        for s in (
            (i, j, m_jk, m_jl),
            (i, m_jk, k, m_kl),
            (i, m_jl, m_kl, l),
            (i, m_jk, m_kl, m_jl),
        ):
            if not bisect(s, 8, out):
                return None, None
        return KIND_FOUR, out
    out = []
    if not bisect(v, 24, out):
        return None, None
    return (KIND_TWIN if len(out) == 2 else KIND_CHAIN), out


def build_closure(forest, _max_passes=50):
    """Extract the conforming LeafMesh, force-refining any leaf whose
    hanging-midpoint pattern matches no supported transitional geometry."""
    for _ in range(_max_passes):
        leaves = forest.leaf_ids()
        lv = forest.node_verts[leaves]
        mid_ids = _edge_midpoints_of(forest, lv)
        has = (mid_ids >= 0).any(axis=1)
        kinds = np.zeros(len(leaves), dtype=np.int8)
        plain_idx = np.nonzero(~has)[0]
        subs = []
        owners = []
        bad = []
        for c in np.nonzero(has)[0]:
            kind, st = _decompose_cell(lv[c], forest.edge_mid)
            if kind is None:
                bad.append(int(leaves[c]))
                continue
            kinds[c] = kind
            subs.extend(st)
            owners.extend([int(c)] * len(st))
        if bad:
            forest.forced += len(bad)
            forest.refine(bad, defer_boundary=False)
            continue
        subtets = np.concatenate(
            [
                lv[plain_idx],
                np.array(subs, dtype=np.int64).reshape(-1, 4),
            ]
        )
        owner = np.concatenate(
            [plain_idx.astype(np.int64), np.array(owners, dtype=np.int64)]
        )
        # orientation fix: make all sub-tets positively oriented
        p = forest.xyz[subtets]
        vols = np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0
        neg = vols < 0
        if neg.any():
            subtets[neg, 0], subtets[neg, 1] = (
                subtets[neg, 1].copy(),
                subtets[neg, 0].copy(),
            )
        return LeafMesh(forest, leaves, kinds, subtets, owner)
    raise MeshError("closure did not stabilize")


def _edge_midpoints_of(forest, lv):
    """Midpoint vertex ids for the 6 edges of each leaf (-1 if absent)."""
    if not forest.edge_mid:
        return np.full((len(lv), 6), -1, dtype=np.int64)
    ek = np.fromiter(
        ((a << _PACK_BITS) | b for (a, b) in forest.edge_mid.keys()),
        dtype=np.int64,
        count=len(forest.edge_mid),
    )
    ev = np.fromiter(forest.edge_mid.values(), dtype=np.int64, count=len(forest.edge_mid))
    order = np.argsort(ek)
    ek = ek[order]
    ev = ev[order]
    out = np.full((len(lv), 6), -1, dtype=np.int64)
    for e, (i, j) in enumerate(TET_EDGES):
        a = np.minimum(lv[:, i], lv[:, j])
        b = np.maximum(lv[:, i], lv[:, j])
        q = (a << _PACK_BITS) | b
        pos = np.searchsorted(ek, q)
        pos = np.clip(pos, 0, len(ek) - 1)
        hit = ek[pos] == q
        out[hit, e] = ev[pos[hit]]
    return out


# ---------------------------------------------------------------------------
# built-in spherical-shell generator
# ---------------------------------------------------------------------------


def _hex_to_tets(corners):
    """Split a hexahedron (8 global vertex ids, ordered (i,j,k) binary:
    000,100,010,110,001,101,011,111) into 6 tets.

    Rule: cone from the hex's smallest global vertex id onto the two
    triangles (split along the diagonal through each face's smallest id)
    of the three faces not containing it.  Faces containing the apex are
    split through it, which is also their smallest id, so the rule is
    consistent between neighboring hexes and across patch seams.
    """
    # faces as corner index quadruples (cyclic order)
    faces = (
        (0, 1, 3, 2),
        (4, 5, 7, 6),
        (0, 1, 5, 4),
        (2, 3, 7, 6),
        (0, 2, 6, 4),
        (1, 3, 7, 5),
    )
    apex_local = int(np.argmin(corners))
    apex = corners[apex_local]
    tets = []
    for f in faces:
        if apex_local in f:
            continue
        quad = [corners[i] for i in f]
        s = int(np.argmin(quad))
        # diagonal through quad[s]
        t1 = (quad[s], quad[(s + 1) % 4], quad[(s + 2) % 4])
        t2 = (quad[s], quad[(s + 2) % 4], quad[(s + 3) % 4])
        tets.append((apex,) + t1)
        tets.append((apex,) + t2)
    return tets


def _quad_triangles(quad):
    """Split a quad (cyclic global ids) along the diagonal through its
    smallest id; matches the _hex_to_tets face rule."""
    s = int(np.argmin(quad))
    return (
        (quad[s], quad[(s + 1) % 4], quad[(s + 2) % 4]),
        (quad[s], quad[(s + 2) % 4], quad[(s + 3) % 4]),
    )


def generate_shell_mesh(r_inner, r_outer, resolution):
    """Spherical-shell mesh between radii r_inner < r_outer.

    Cube-sphere decomposition: 6 patches x resolution^2 quads x resolution
    radial layers of hexahedra, 6 tets each.  All vertices are placed
    radially; boundary vertices lie exactly on their spheres.  Returns
    (forest, leaf_mesh).
    """
    if not (0.0 < r_inner < r_outer):
        raise MeshError("need 0 < r_inner < r_outer")
    k = int(resolution)
    if k < 1:
        raise MeshError("resolution must be >= 1")
    forest = HgtForest()
    # unit directions on the cube surface, deduplicated across patch seams
    dir_ids = {}
    axes = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            axes.append((axis, sign))
    dirs = []  # unit vectors by dir id
    patch_grids = []
    for axis, sign in axes:
        grid = np.empty((k + 1, k + 1), dtype=np.int64)
        for i in range(k + 1):
            for j in range(k + 1):
                uv = np.empty(3)
                uv[axis] = sign
                u = -1.0 + 2.0 * i / k
                v = -1.0 + 2.0 * j / k
                uv[(axis + 1) % 3] = u
                uv[(axis + 2) % 3] = v
                d = uv / np.linalg.norm(uv)
                key = tuple(np.round(d, 12))
                if key in dir_ids:
                    di = dir_ids[key]
                else:
                    di = len(dirs)
                    dir_ids[key] = di
                    dirs.append(d)
                grid[i, j] = di
        patch_grids.append(grid)
    dirs = np.array(dirs)
    # vertices: direction x radial layer
    radii = np.linspace(r_inner, r_outer, k + 1)
    nvdir = len(dirs)
    vid = np.empty((nvdir, k + 1), dtype=np.int64)
    for di in range(nvdir):
        for l in range(k + 1):
            tag = TAG_OBSTACLE if l == 0 else (TAG_OUTER if l == k else TAG_NONE)
            vid[di, l] = forest.add_vertex(dirs[di] * radii[l], tag)
    # hexes and tags
    for grid in patch_grids:
        for i in range(k):
            for j in range(k):
                d00, d10 = grid[i, j], grid[i + 1, j]
                d01, d11 = grid[i, j + 1], grid[i + 1, j + 1]
                for l in range(k):
                    corners = np.array(
                        [
                            vid[d00, l],
                            vid[d10, l],
                            vid[d01, l],
                            vid[d11, l],
                            vid[d00, l + 1],
                            vid[d10, l + 1],
                            vid[d01, l + 1],
                            vid[d11, l + 1],
                        ],
                        dtype=np.int64,
                    )
                    for tet in _hex_to_tets(corners):
                        forest.add_root(tet)
                    if l == 0:
                        quad = [vid[d00, 0], vid[d10, 0], vid[d11, 0], vid[d01, 0]]
                        for tri in _quad_triangles(quad):
                            forest.tag_face(*tri, TAG_OBSTACLE)
                    if l == k - 1:
                        quad = [vid[d00, k], vid[d10, k], vid[d11, k], vid[d01, k]]
                        for tri in _quad_triangles(quad):
                            forest.tag_face(*tri, TAG_OUTER)
    mesh = build_closure(forest)
    return forest, mesh
