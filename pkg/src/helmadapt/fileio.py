"""Mesh and result I/O: GMSH MSH 2.2 ASCII, legacy VTK, history CSV."""

import numpy as np

from .mesh import HgtForest, TAG_OBSTACLE, TAG_OUTER

CSV_HEADER = "iter,dof,cells,N,eps_N,eta,e_h,wall_time_s"


class MshError(ValueError):
    pass


def _physical_tag_map(names):
    """Map MSH physical-group ids to boundary tags.

    With $PhysicalNames present, group names containing 'obstacle' or
    'outer' decide; otherwise physical id 1 is the obstacle and 2 the
    outer sphere.
    """
    if not names:
        return None
    out = {}
    for pid, name in names.items():
        low = name.lower()
        if "obstacle" in low:
            out[pid] = TAG_OBSTACLE
        elif "outer" in low:
            out[pid] = TAG_OUTER
    return out


def read_msh(path):
    """Read an MSH 2.2 ASCII file into an HgtForest of root tetrahedra.

    Supports 4-node tetrahedra (type 4) as cells and 3-node triangles
    (type 2) as tagged boundary faces; point elements (type 15) are
    ignored.  Parse errors name the offending line."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    n = len(lines)

    def err(lineno, msg):
        raise MshError(f"{path}:{lineno + 1}: {msg}")

    nodes = {}
    elements = []  # (lineno, type, phys_tag, node_ids)
    names = {}
    seen_format = False
    while i < n:
        line = lines[i].strip()
        if line == "$MeshFormat":
            parts = lines[i + 1].split()
            if not parts or not parts[0].startswith("2.2"):
                err(i + 1, f"unsupported MSH version {parts[0] if parts else '?'}")
            seen_format = True
            i += 3
        elif line == "$PhysicalNames":
            cnt = int(lines[i + 1])
            for k in range(cnt):
                parts = lines[i + 2 + k].split(None, 2)
                names[int(parts[1])] = parts[2].strip().strip('"')
            i += cnt + 3
        elif line == "$Nodes":
            cnt = int(lines[i + 1])
            for k in range(cnt):
                ln = i + 2 + k
                parts = lines[ln].split()
                if len(parts) != 4:
                    err(ln, f"malformed node line: {lines[ln]!r}")
                nodes[int(parts[0])] = tuple(float(x) for x in parts[1:])
            i += cnt + 3
        elif line == "$Elements":
            cnt = int(lines[i + 1])
            for k in range(cnt):
                ln = i + 2 + k
                parts = lines[ln].split()
                try:
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    tags = [int(t) for t in parts[3 : 3 + ntags]]
                    conn = [int(t) for t in parts[3 + ntags :]]
                except (IndexError, ValueError):
                    err(ln, f"malformed element line: {lines[ln]!r}")
                if etype == 15:
                    continue
                if etype not in (2, 4):
                    err(ln, f"unsupported element type {etype}")
                want = 3 if etype == 2 else 4
                if len(conn) != want:
                    err(ln, f"element expects {want} nodes, got {len(conn)}")
                elements.append((ln, etype, tags[0] if tags else 0, conn))
            i += cnt + 3
        elif line.startswith("$"):
            # skip unknown section
            end = "$End" + line[1:]
            j = i + 1
            while j < n and lines[j].strip() != end:
                j += 1
            i = j + 1
        else:
            i += 1
    if not seen_format:
        raise MshError(f"{path}: missing $MeshFormat section")
    if not nodes:
        raise MshError(f"{path}: no nodes")
    tag_map = _physical_tag_map(names)
    forest = HgtForest()
    vid = {}
    for node_id in sorted(nodes):
        vid[node_id] = forest.add_vertex(np.asarray(nodes[node_id]))
    ntet = 0
    for ln, etype, phys, conn in elements:
        if etype == 4:
            forest.add_root([vid[c] for c in conn])
            ntet += 1
    for ln, etype, phys, conn in elements:
        if etype == 2:
            if tag_map is not None:
                tag = tag_map.get(phys)
            else:
                tag = {1: TAG_OBSTACLE, 2: TAG_OUTER}.get(phys)
            if tag is None:
                err(ln, f"triangle with unmapped physical tag {phys}")
            v = [vid[c] for c in conn]
            forest.tag_face(*v, tag)
            for x in v:
                forest._vtag[x] = tag
    if ntet == 0:
        raise MshError(f"{path}: no tetrahedra")
    return forest


def write_msh(path, xyz, tets, tagged_faces):
    """Write an MSH 2.2 ASCII file.

    tagged_faces: iterable of (tag, (a, b, c)) with tag the boundary tag;
    physical ids follow the 1=obstacle / 2=outer convention.
    """
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write("$PhysicalNames\n2\n")
        fh.write('2 1 "obstacle"\n2 2 "outer"\n')
        fh.write("$EndPhysicalNames\n")
        fh.write(f"$Nodes\n{len(xyz)}\n")
        for i, p in enumerate(xyz):
            fh.write(f"{i + 1} {p[0]:.16g} {p[1]:.16g} {p[2]:.16g}\n")
        fh.write("$EndNodes\n")
        faces = list(tagged_faces)
        fh.write(f"$Elements\n{len(faces) + len(tets)}\n")
        eid = 1
        for tag, (a, b, c) in faces:
            phys = 1 if tag == TAG_OBSTACLE else 2
            fh.write(f"{eid} 2 2 {phys} {phys} {a + 1} {b + 1} {c + 1}\n")
            eid += 1
        for t in tets:
            fh.write(
                f"{eid} 4 2 0 0 {t[0] + 1} {t[1] + 1} {t[2] + 1} {t[3] + 1}\n"
            )
            eid += 1
        fh.write("$EndElements\n")


def write_vtk(path, mesh, solution=None, dofmap=None, eta_cells=None):
    """Legacy ASCII VTK unstructured grid of the leaf mesh's sub-tets.

    Writes point scalars Re(u), Im(u), |u| when a solution is given and
    the per-cell indicator replicated onto sub-tets when provided."""
    verts = np.unique(mesh.subtets)
    remap = np.full(mesh.xyz.shape[0], -1, dtype=np.int64)
    remap[verts] = np.arange(len(verts))
    pts = mesh.xyz[verts]
    cells = remap[mesh.subtets]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("helmadapt leaf mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        for p in pts:
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        m = len(cells)
        fh.write(f"CELLS {m} {5 * m}\n")
        for c in cells:
            fh.write(f"4 {c[0]} {c[1]} {c[2]} {c[3]}\n")
        fh.write(f"CELL_TYPES {m}\n")
        fh.write("10\n" * m)
        if solution is not None and dofmap is not None:
            uv = solution[dofmap.vertex_to_dof[verts]]
            fh.write(f"POINT_DATA {len(pts)}\n")
            for name, vals in (
                ("re_u", uv.real),
                ("im_u", uv.imag),
                ("abs_u", np.abs(uv)),
            ):
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(f"{v:.9g}" for v in vals) + "\n")
        if eta_cells is not None:
            sub_eta = eta_cells[mesh.sub_owner]
            fh.write(f"CELL_DATA {m}\n")
            fh.write("SCALARS eta double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{v:.9g}" for v in sub_eta) + "\n")


def export_csv(history, path):
    """Write the convergence history as CSV (header pinned)."""
    if not history.rows:
        raise ValueError("nothing to export: history is empty")
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in history.rows:
            e_h = "" if r["e_h"] is None else f"{r['e_h']:.10g}"
            fh.write(
                f"{r['iteration']},{r['dof']},{r['cells']},{r['n_trunc']},"
                f"{r['eps_n']:.10g},{r['eta']:.10g},{e_h},"
                f"{r['wall_time']:.3f}\n"
            )
