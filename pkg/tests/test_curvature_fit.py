# tests/test_curvature_fit.py
import numpy as np
import pytest

from estimator.curvature_fit import fit_psi4, split_traces, weighted_fit
from estimator.curvature_report import curvature_report, relative_error
from estimator.expected_signature import EstimatorError

GRID = [0.02, 0.04, 0.06, 0.08, 0.1]


def test_weighted_fit_recovers_exact_polynomial():
    t = np.array(GRID)
    a = np.array([1.5, -0.25])
    b = np.array([-3.0, 2.0])
    values = np.outer(t ** 2, a) + np.outer(t ** 3, b)
    stderr = np.full_like(values, 1e-3)
    coef, cov, solver, chi2 = weighted_fit(t, values, stderr, fit_order=3)
    np.testing.assert_allclose(coef[:, 0], a, rtol=1e-8)
    np.testing.assert_allclose(coef[:, 1], b, rtol=1e-8)
    assert chi2 == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(np.einsum("ept,te->ep", solver, values), coef, rtol=1e-8)
    assert cov.shape == (2, 2, 2)


def test_weighted_fit_with_nuisance_term():
    t = np.array(GRID)
    values = (0.5 * t ** 2 - 2.0 * t ** 3 + 7.0 * t ** 4)[:, None]
    coef, _, _, _ = weighted_fit(t, values, np.full_like(values, 1e-4), fit_order=4)
    np.testing.assert_allclose(coef[0], [0.5, -2.0, 7.0], rtol=1e-6)


def test_weighted_fit_rejects_short_grid():
    t = np.array([0.05])
    with pytest.raises(EstimatorError):
        weighted_fit(t, np.ones((1, 1)), np.ones((1, 1)), fit_order=3)


def test_split_traces_of_identity_pattern():
    frame = np.eye(3)[:, :2]
    xi = np.einsum("uw,ab->uawb", np.eye(3), np.eye(3))
    xi_t, xi_n = split_traces(xi, frame)
    np.testing.assert_allclose(xi_t, 2 * np.eye(2))
    np.testing.assert_allclose(xi_n, np.eye(2))


def test_relative_error_falls_back_to_absolute():
    assert relative_error(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(5.0)
    assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "grid, order",
    [
        ([0.02, 0.04, 0.06], 4),
        ([0.02, 0.04, 0.06, 5.0], 4),
        ([0.02, 0.02, 0.06, 0.08], 4),
        (GRID, 2),
    ],
)
def test_fit_validation(sphere, sphere_base, grid, order):
    with pytest.raises(EstimatorError):
        fit_psi4(sphere, sphere_base, grid, samples=16, fit_order=order)


def test_small_fit_has_expected_shapes(sphere, sphere_base):
    fit = fit_psi4(sphere, sphere_base, GRID[:4], samples=64, seed=1, fit_order=3, steps=8)
    assert fit.theta_hat.shape == (3, 3, 3, 3)
    assert fit.xi_hat.shape == (3, 3, 3, 3)
    assert len(fit.estimates) == 4
    assert len(fit.alternative["relation_max_z"]) == 4
    value, err = fit.jackknife(lambda theta, xi: theta.sum())
    assert np.isfinite(value) and np.isfinite(err)


@pytest.mark.slow
def test_sphere_curvature_recovery(sphere, sphere_base):
    fit = fit_psi4(sphere, sphere_base, GRID, samples=200_000, seed=7)
    report = curvature_report(fit, sphere, sphere_base)
    assert report.theta.rel_err < 0.05
    assert report.recovered["S"].rel_err < 0.15
    assert report.recovered["H2"].rel_err < 0.15
