"""Marking strategies, configuration validation, short adaptive runs."""

import math

import numpy as np
import pytest

from helmadapt import adapt, problems
from helmadapt.adapt import MARK_BULK, MARK_THRESHOLD, AdaptConfig
from helmadapt.estimator import IndicatorField


def field_of(*eta):
    return IndicatorField(np.array(eta, dtype=float))


def test_bulk_marking_smallest_dominating_set():
    # eta^2 = (9, 4, 4, 1), total 18; theta = 0.7 needs 8.82, so the
    # single largest cell (9 >= 8.82) suffices
    cfg = AdaptConfig(marking=MARK_BULK, theta=0.7)
    marked = adapt.mark(field_of(3.0, 2.0, 2.0, 1.0), cfg)
    assert marked.tolist() == [0]


def test_bulk_marking_theta_near_one_marks_all_positive():
    cfg = AdaptConfig(marking=MARK_BULK, theta=0.999999)
    marked = adapt.mark(field_of(3.0, 2.0, 0.0, 1.0), cfg)
    assert sorted(marked.tolist()) == [0, 1, 3]  # zero-indicator cell skipped


def test_bulk_marking_ties_break_by_cell_id():
    # theta^2 * total = 4 is reached by a single tied cell; the lowest
    # cell id wins the tie
    cfg = AdaptConfig(marking=MARK_BULK, theta=0.5)
    marked = adapt.mark(field_of(2.0, 2.0, 2.0, 2.0), cfg)
    assert marked.tolist() == [0]
    # theta^2 * total = 7.84 needs two of the four equal cells
    cfg = AdaptConfig(marking=MARK_BULK, theta=0.7)
    marked = adapt.mark(field_of(2.0, 2.0, 2.0, 2.0), cfg)
    assert marked.tolist() == [0, 1]


def test_threshold_marking():
    cfg = AdaptConfig(tolerance=1.5, marking=MARK_THRESHOLD)
    marked = adapt.mark(field_of(3.0, 2.0, 1.0, 0.5), cfg)
    assert sorted(marked.tolist()) == [0, 1]
    cfg = AdaptConfig(tolerance=10.0, marking=MARK_THRESHOLD)
    assert adapt.mark(field_of(3.0, 2.0), cfg).size == 0


def test_zero_field_marks_nothing():
    cfg = AdaptConfig(marking=MARK_BULK, theta=0.5)
    assert adapt.mark(field_of(0.0, 0.0), cfg).size == 0


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(theta=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(theta=1.0)
    with pytest.raises(ValueError):
        AdaptConfig(marking="random")


def test_history_requires_increasing_dof():
    h = adapt.ConvergenceHistory()
    h.append(iteration=0, dof=10, cells=5, n_trunc=4, eps_n=0.0, eta=1.0,
             e_h=None, wall_time=0.1)
    with pytest.raises(ValueError):
        h.append(iteration=1, dof=10, cells=6, n_trunc=4, eps_n=0.0,
                 eta=0.9, e_h=None, wall_time=0.1)
    assert np.isnan(h.column("e_h")).all()
    assert h.column("dof").tolist() == [10.0]


def test_short_adaptive_run_decreases_error():
    prob = problems.example1(resolution=2)
    cfg = AdaptConfig(max_dof=1500, max_iterations=6, n_trunc=8)
    res = adapt.run(prob, cfg)
    rows = res.history.rows
    assert len(rows) >= 3
    dofs = res.history.column("dof")
    assert np.all(np.diff(dofs) > 0)
    ehs = res.history.column("e_h")
    assert ehs[-1] < ehs[0]
    etas = res.history.column("eta")
    assert etas[-1] < etas[0]
    # history rows carry the fixed truncation data
    assert all(r["n_trunc"] == 8 for r in rows)
    assert all(r["wall_time"] > 0 for r in rows)
