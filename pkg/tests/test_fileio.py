"""MSH import, VTK export, CSV history export."""

import math

import numpy as np
import pytest

from helmadapt import adapt, fileio, mesh as meshmod, problems
from helmadapt.mesh import TAG_OBSTACLE, TAG_OUTER, build_closure


MINIMAL_MSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
2 1 "obstacle"
2 2 "outer"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
5
1 4 2 0 1 1 2 3 4
2 2 2 1 1 1 2 3
3 2 2 1 1 1 2 4
4 2 2 1 1 1 3 4
5 2 2 2 1 2 3 4
$EndElements
"""


def test_read_minimal_fixture(tmp_path):
    p = tmp_path / "one.msh"
    p.write_text(MINIMAL_MSH)
    forest = fileio.read_msh(str(p))
    assert forest.nnodes == 1
    assert forest.nverts == 4
    assert len(forest.bface) == 4
    lm = build_closure(forest)
    f = lm.faces
    assert sorted(f["boundary_tag"].tolist()) == [1, 1, 1, 2]


def test_read_fixes_negative_orientation(tmp_path):
    # swap two tet vertices so the file volume is negative
    bad = MINIMAL_MSH.replace("1 4 2 0 1 1 2 3 4", "1 4 2 0 1 2 1 3 4")
    p = tmp_path / "neg.msh"
    p.write_text(bad)
    forest = fileio.read_msh(str(p))
    assert forest.node_volumes(forest.leaf_ids())[0] > 0.0


def test_unsupported_element_type_names_line(tmp_path):
    bad = MINIMAL_MSH.replace(
        "2 2 2 1 1 1 2 3", "2 11 2 1 1 1 2 3 4 5 6 7 8 9 10"
    )
    p = tmp_path / "bad.msh"
    p.write_text(bad)
    with pytest.raises(fileio.MshError, match=r"bad\.msh:\d+.*unsupported element type 11"):
        fileio.read_msh(str(p))


def test_unsupported_version_rejected(tmp_path):
    p = tmp_path / "v4.msh"
    p.write_text(MINIMAL_MSH.replace("2.2 0 8", "4.1 0 8"))
    with pytest.raises(fileio.MshError, match="unsupported MSH version"):
        fileio.read_msh(str(p))


def test_msh_round_trip(tmp_path):
    xyz = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    tets = np.array([[0, 1, 2, 3]])
    faces = [(TAG_OBSTACLE, (0, 1, 2)), (TAG_OUTER, (1, 2, 3))]
    p = tmp_path / "rt.msh"
    fileio.write_msh(str(p), xyz, tets, faces)
    forest = fileio.read_msh(str(p))
    assert forest.nnodes == 1
    np.testing.assert_allclose(forest.xyz[:4], xyz)
    assert len(forest.bface) == 2
    assert set(forest.bface.values()) == {TAG_OBSTACLE, TAG_OUTER}


def test_packaged_example2_fixture_loads():
    prob = problems.example2()
    lm = build_closure(prob.forest)
    tags = set(np.unique(lm.faces["boundary_tag"]))
    assert tags == {TAG_OBSTACLE, TAG_OUTER}


def test_csv_header_and_blank_e_h(tmp_path):
    h = adapt.ConvergenceHistory()
    h.append(iteration=0, dof=10, cells=5, n_trunc=4, eps_n=1e-9, eta=2.5,
             e_h=None, wall_time=0.25)
    p = tmp_path / "hist.csv"
    fileio.export_csv(h, str(p))
    lines = p.read_text().splitlines()
    assert lines[0] == "iter,dof,cells,N,eps_N,eta,e_h,wall_time_s"
    assert len(lines) == 2
    cols = lines[1].split(",")
    assert cols[0] == "0" and cols[1] == "10"
    assert cols[6] == ""  # no analytic solution: e_h left blank


def test_export_empty_history_errors(tmp_path):
    h = adapt.ConvergenceHistory()
    with pytest.raises(ValueError, match="nothing to export"):
        fileio.export_csv(h, str(tmp_path / "x.csv"))


def test_vtk_point_count_round_trip(tmp_path):
    forest, lm = meshmod.generate_shell_mesh(0.5, 1.0, 1)
    from helmadapt import assembly

    dofmap = assembly.DofMap(lm)
    u = np.arange(dofmap.ndof, dtype=complex)
    eta = np.linspace(0.0, 1.0, lm.ncells)
    p = tmp_path / "out.vtk"
    fileio.write_vtk(str(p), lm, solution=u, dofmap=dofmap, eta_cells=eta)
    text = p.read_text().splitlines()
    npts = None
    ncells = None
    for line in text:
        if line.startswith("POINTS"):
            npts = int(line.split()[1])
        if line.startswith("CELLS "):
            ncells = int(line.split()[1])
    assert npts == forest.nverts
    assert ncells == len(lm.subtets)
    assert any(line.startswith("POINT_DATA") for line in text)
    assert any("re_u" in line for line in text)
    assert any("eta" in line for line in text)
