"""Linear solver: residual contract, determinism, edge cases."""

import math

import numpy as np
import pytest

from helmadapt import assembly, linsolve, problems
from helmadapt.mesh import generate_shell_mesh


@pytest.fixture(scope="module")
def system():
    _, lm = generate_shell_mesh(0.5, 1.0, 2)
    dofmap = assembly.DofMap(lm)
    g = problems.boundary_data_example1(math.pi)
    return assembly.assemble(lm, dofmap, math.pi, 1.0, 8, g)


def test_solve_meets_residual_contract(system):
    u, report = linsolve.solve(system, tol=1e-10)
    assert report.relative_residual <= 1e-10
    r = system.apply(u) - system.load
    b = np.linalg.norm(system.load)
    assert np.linalg.norm(r) / b <= 1e-10
    assert report.wall_time >= 0.0


def test_zero_rhs_gives_zero_solution(system):
    saved = system.load
    system.load = np.zeros_like(saved)
    try:
        u, report = linsolve.solve(system)
        assert np.all(u == 0.0)
        assert report.relative_residual == 0.0
    finally:
        system.load = saved


def test_solve_is_deterministic(system):
    u1, _ = linsolve.solve(system)
    u2, _ = linsolve.solve(system)
    np.testing.assert_array_equal(u1, u2)


def test_manufactured_solution_recovered(system):
    # replace the load by A @ x for a known x; the solver must return x
    rng = np.random.default_rng(17)
    n = system.sparse_part.shape[0]
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    saved = system.load
    system.load = system.apply(x)
    try:
        u, _ = linsolve.solve(system, tol=1e-12)
        assert np.linalg.norm(u - x) / np.linalg.norm(x) < 1e-8
    finally:
        system.load = saved


def test_tolerance_validation(system):
    with pytest.raises(linsolve.SolverError):
        linsolve.solve(system, tol=0.0)
    with pytest.raises(linsolve.SolverError):
        linsolve.solve(system, tol=1e-3)
