# tests/test_pde.py
import math

import numpy as np
import pandas as pd
import pytest

from pde.solvers import (
    CSV_COLUMNS,
    PDEStabilityError,
    level1_bm_error,
    level1_bridge_error,
    loop_t2_coefficient,
    refinement_ratio,
    solve_circle_bm,
    solve_circle_bridge,
    solve_euclidean,
)


@pytest.mark.parametrize("d, m", [(1, 4), (2, 6), (3, 4)])
def test_euclidean_rk4_matches_closed_form(d, m):
    sol = solve_euclidean(1.0, d, m)
    assert sol.max_diff < 1e-10
    np.testing.assert_allclose(sol.closed.level(2, shaped=True), 0.5 * np.eye(d))


def test_euclidean_at_zero_is_unit():
    sol = solve_euclidean(0.0, 2, 4)
    assert sol.rk4.allclose(sol.closed)
    with pytest.raises(ValueError):
        solve_euclidean(-1.0, 2, 4)


def test_circle_bm_level_one():
    field = solve_circle_bm(0.5, 128, 2)
    assert field.level0_error() < 1e-12
    assert level1_bm_error(field) < 1e-3


def test_circle_bm_at_level_one():
    field = solve_circle_bm(0.5, 64, 1)
    assert field.values.max_level == 1
    assert level1_bm_error(field) < 5e-3


def test_circle_bm_is_second_order():
    assert 3.5 < refinement_ratio(0.5, 64) < 4.5


def test_circle_bridge_level_one_is_exact():
    y = 0.5 * math.pi
    field = solve_circle_bridge(0.2, y, 64, 2, eps=0.05)
    assert level1_bridge_error(field) < 1e-9
    assert field.meta["y_theta"] == y


@pytest.mark.parametrize("eps", [0.0, 0.5, -1e-3])
def test_bridge_eps_range(eps):
    with pytest.raises(ValueError):
        solve_circle_bridge(0.2, 0.0, 64, 2, eps=eps)


def test_bridge_needs_positive_lifetime():
    with pytest.raises(ValueError):
        solve_circle_bridge(0.0, 0.0, 64, 2)


def test_small_grids_rejected():
    with pytest.raises(ValueError):
        solve_circle_bm(0.1, 32, 2)


def test_unstable_time_step_rejected():
    with pytest.raises(PDEStabilityError):
        solve_circle_bm(0.1, 64, 2, dt=0.1)


def test_field_csv_layout(tmp_path):
    field = solve_circle_bm(0.05, 64, 2)
    path = field.to_csv(tmp_path / "field.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 64 * (1 + 2 + 4)
    assert set(frame["level"]) == {0, 1, 2}


@pytest.mark.slow
def test_circle_bm_fine_grid():
    assert level1_bm_error(solve_circle_bm(0.5, 512, 1)) < 1e-5


@pytest.mark.slow
def test_flat_circle_loops_have_no_t2_term():
    fit = loop_t2_coefficient([0.02, 0.04, 0.06, 0.08, 0.1], 256)
    assert abs(fit["t2"]) < 1e-2
