# tests/test_geometry.py
import math

import numpy as np
import pytest

from algebra.truncated_tensor import contract_24
from geometry.catalog import make_manifold, parse_manifold_spec
from geometry.differential import curvature, distance, exp_map, extrinsic, gauss_curvature_tensor, log_map, metric
from geometry.expansion import (
    recover_tangent_space,
    solve_invariants,
    theoretical_expansion_tensors,
    theta_hat_theory,
    theta_theory,
    xi_normal_invariant,
    xi_tangential_invariant,
    xi_total_invariant,
)
from geometry.finite_difference import first_derivative, second_derivative, third_derivative
from geometry.identities import verify_identities
from geometry.manifolds import CutLocusError, GeometryError
from geometry.normal_chart import NormalChart

IDENTITY_TOL = 1e-4


def test_parse_manifold_spec():
    assert parse_manifold_spec("sphere:d=2,r=1") == ("sphere", {"d": 2, "r": 1.0})
    assert parse_manifold_spec("clifford") == ("clifford", {})
    with pytest.raises(GeometryError):
        parse_manifold_spec("torus:d=2")
    with pytest.raises(GeometryError):
        parse_manifold_spec("sphere:q=2")


def test_spec_string_round_trips_through_catalog(sphere):
    again = make_manifold(sphere.spec_string())
    assert again.spec_string() == sphere.spec_string()


@pytest.mark.parametrize("spec", ["circle:r=1", "sphere:d=2,r=1", "sphere:d=3,r=2", "clifford", "euclidean:d=3"])
def test_exp_log_inverse(spec, rng):
    M = make_manifold(spec)
    p = M.embed(M.base_chart_point())
    frame = M.tangent_frame(p)
    v = frame @ rng.normal(size=M.chart_dim)
    v *= 0.4 * min(M.injectivity_radius, 3.0) / np.linalg.norm(v)
    q = M.exp(p, v)
    np.testing.assert_allclose(M.log(p, q), v, atol=1e-9)
    assert M.distance(p, q) == pytest.approx(np.linalg.norm(v), abs=1e-9)


def test_module_level_maps_match_methods(sphere, sphere_base):
    np.testing.assert_allclose(log_map(sphere, sphere_base, sphere_base), 0.0, atol=1e-12)
    v = sphere.tangent_frame(sphere_base) @ np.array([0.5, 0.0])
    q = exp_map(sphere, sphere_base, v)
    assert distance(sphere, sphere_base, q) == pytest.approx(0.5, abs=1e-9)


def test_exp_stays_on_manifold(sphere, sphere_base, rng):
    v = sphere.tangent_frame(sphere_base) @ rng.normal(size=2)
    q = sphere.exp(sphere_base, v)
    assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)


def test_ellipsoid_exp_log(ellipsoid, rng):
    p = ellipsoid.embed(ellipsoid.base_chart_point())
    v = ellipsoid.tangent_frame(p) @ np.array([0.3, -0.2])
    q = ellipsoid.exp(p, v)
    np.testing.assert_allclose(ellipsoid.log(p, q), v, atol=1e-7)


def test_ellipsoid_shooting_failure_drops_the_point(ellipsoid, monkeypatch):
    monkeypatch.setattr("geometry.catalog.SHOOTING_MAX_ITER", 0)
    p = ellipsoid.embed(ellipsoid.base_chart_point())
    q = ellipsoid.exp(p, ellipsoid.tangent_frame(p) @ np.array([0.3, -0.2]))
    with pytest.raises(CutLocusError):
        ellipsoid.log(p, q)
    _, valid = ellipsoid.log_safe(p[None], q[None])
    assert not valid.any()


def test_antipodal_points_hit_cut_locus(sphere, sphere_base):
    with pytest.raises(CutLocusError):
        sphere.log(sphere_base, -sphere_base)


def test_circle_antipode_hits_cut_locus(circle):
    with pytest.raises(CutLocusError):
        circle.log(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))


def test_finite_differences_of_a_cubic():
    def f(pts):
        x, y = pts[..., 0], pts[..., 1]
        return (x ** 3 + x * y ** 2)[..., None]

    at = np.array([0.7, -0.4])
    np.testing.assert_allclose(first_derivative(f, at)[0], [3 * 0.49 + 0.16, 2 * 0.7 * -0.4], atol=1e-9)
    np.testing.assert_allclose(second_derivative(f, at)[0], [[6 * 0.7, 2 * -0.4], [2 * -0.4, 2 * 0.7]], atol=1e-7)
    third = third_derivative(f, at)[0]
    assert third[0, 0, 0] == pytest.approx(6.0, abs=1e-5)
    assert third[0, 1, 1] == pytest.approx(2.0, abs=1e-5)
    assert third[1, 1, 1] == pytest.approx(0.0, abs=1e-5)


def test_unit_sphere_curvature(sphere):
    x = sphere.base_chart_point()
    g = metric(sphere, x)
    curv = curvature(sphere, x)
    expected = np.einsum("ik,jl->ijkl", g, g) - np.einsum("il,jk->ijkl", g, g)
    np.testing.assert_allclose(curv.riemann, expected, atol=1e-6)
    assert curv.scalar == pytest.approx(2.0, abs=1e-6)


def test_sphere_radius_scales_curvature():
    M = make_manifold("sphere:d=2,r=2")
    assert curvature(M, M.base_chart_point()).scalar == pytest.approx(0.5, abs=1e-6)


def test_gauss_equation_matches_intrinsic_curvature(ellipsoid):
    x = ellipsoid.base_chart_point()
    np.testing.assert_allclose(
        gauss_curvature_tensor(ellipsoid, x), curvature(ellipsoid, x).riemann, atol=1e-5
    )


def test_clifford_torus_is_flat_with_unit_mean_curvature(clifford):
    x = clifford.base_chart_point()
    assert np.max(np.abs(curvature(clifford, x).riemann)) < 1e-6
    ext = extrinsic(clifford, x)
    assert ext.mean_curvature_sq == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(ext.b_dot_h, np.eye(2), atol=1e-6)


def test_sphere_mean_curvature_is_inward_normal(sphere, sphere_base):
    ext = extrinsic(sphere, sphere.chart(sphere_base))
    np.testing.assert_allclose(ext.mean_curvature, -sphere_base, atol=1e-6)


def test_normal_chart_first_derivatives_are_orthonormal(clifford):
    chart = NormalChart(clifford)
    np.testing.assert_allclose(chart.v1.T @ chart.v1, np.eye(2), atol=1e-8)
    np.testing.assert_allclose(chart.metric_at_zero(), np.eye(2), atol=1e-8)


@pytest.mark.parametrize("spec", ["sphere:d=2,r=1", "clifford"])
def test_embedding_identities(spec):
    report = verify_identities(make_manifold(spec))
    bad = {k: v for k, v in report["residuals"].items() if v > IDENTITY_TOL}
    assert not bad


@pytest.mark.parametrize("spec", ["sphere:d=2,r=1", "clifford"])
def test_two_routes_to_xi_agree(spec):
    oracle = theoretical_expansion_tensors(make_manifold(spec), strict=True)
    assert oracle.residuals["xi_routes"] <= IDENTITY_TOL


def test_unit_sphere_xi_value(sphere):
    oracle = theoretical_expansion_tensors(sphere)
    np.testing.assert_allclose(oracle.xi, -5.0 / 432.0 * np.eye(2), atol=1e-6)


def test_invariant_split_adds_up(rng):
    d = 3
    ric = rng.normal(size=(d, d))
    ric = ric + ric.T
    bh = rng.normal(size=(d, d))
    bh = bh + bh.T
    s, h2 = float(np.trace(ric)), 0.7
    total = xi_tangential_invariant(d, ric, s, h2, bh) + xi_normal_invariant(d, ric, s, h2, bh)
    np.testing.assert_allclose(total, xi_total_invariant(d, ric, s, h2, bh), atol=1e-12)


def test_solve_invariants_inverts_the_split():
    d = 2
    ric, s, h2, bh = np.eye(2), 2.0, 1.0, np.eye(2)
    out = solve_invariants(
        d, xi_tangential_invariant(d, ric, s, h2, bh), xi_normal_invariant(d, ric, s, h2, bh)
    )
    assert out["S"] == pytest.approx(2.0, abs=1e-9)
    assert out["H2"] == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(out["Ric"], ric, atol=1e-9)
    np.testing.assert_allclose(out["BH"], bh, atol=1e-9)
    assert out["cond_scalar"] < 1e6


def test_theta_hat_contracts_to_theta(sphere):
    frame = NormalChart(sphere).frame
    np.testing.assert_allclose(contract_24(theta_hat_theory(frame)), theta_theory(frame), atol=1e-14)


def test_tangent_space_recovered_from_theta(clifford):
    frame = NormalChart(clifford).frame
    out = recover_tangent_space(theta_theory(frame), 2, frame)
    np.testing.assert_allclose(out["principal_cosines"], [1.0, 1.0], atol=1e-10)


def test_injectivity_radii():
    assert make_manifold("sphere:d=2,r=1").injectivity_radius == pytest.approx(math.pi)
    assert make_manifold("clifford").injectivity_radius == pytest.approx(math.pi / math.sqrt(2.0))
    assert make_manifold("ellipsoid:a=1,b=1,c=1.2").injectivity_radius > 0
