# tests/test_sampler.py
import json
import math

import numpy as np
import pytest

from config.constants import MODE_EXACT, MODE_SMALL_TIME
from sim.heat_kernel import (
    HeatKernelModel,
    SamplerError,
    g1_numeric,
    sphere_radial_score,
    wrapped_gaussian_score,
)
from sim.sampler import sample_bm, sample_bridge, simulate_block
from sim.seeding import block_ranges, path_noise


def test_path_noise_is_reproducible_and_independent_of_blocks():
    a = path_noise(7, 12, 10, 3)
    b = path_noise(7, 12, 10, 3)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(path_noise(7, 13, 10, 3), a)


def test_antithetic_pairs_share_negated_noise():
    even = path_noise(3, 4, 8, 2, antithetic=True)
    odd = path_noise(3, 5, 8, 2, antithetic=True)
    np.testing.assert_array_equal(odd, -even)


def test_block_ranges_cover_every_path():
    ranges = block_ranges(10, 4)
    assert ranges == [(0, 4), (4, 8), (8, 10)]


def test_wrapped_gaussian_score_small_time_is_linear():
    gap = np.array([0.1, -0.2])
    np.testing.assert_allclose(wrapped_gaussian_score(gap, 2 * math.pi, 0.01), gap / 0.01, rtol=1e-10)


def test_wrapped_gaussian_score_is_periodic_and_odd():
    gap = np.array([0.7])
    period = 2 * math.pi
    np.testing.assert_allclose(
        wrapped_gaussian_score(gap + period, period, 0.5), wrapped_gaussian_score(gap, period, 0.5), atol=1e-12
    )
    np.testing.assert_allclose(
        wrapped_gaussian_score(-gap, period, 0.5), -wrapped_gaussian_score(gap, period, 0.5), atol=1e-12
    )


def test_sphere_series_score_matches_small_time_asymptotics():
    theta = np.array([0.3])
    tau = 0.01
    # leading terms: θ/τ - ½(d-1)(1/θ - cot θ)
    asymptotic = theta / tau - 0.5 * (1.0 / theta - 1.0 / np.tan(theta))
    np.testing.assert_allclose(sphere_radial_score(theta, tau, 2), asymptotic, rtol=2e-2)


def test_sphere_g1_numeric_matches_closed_form(sphere, sphere_base):
    y = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 0] * 0.6)
    closed = -0.5 * math.log(math.sin(0.6) / 0.6)
    assert g1_numeric(sphere, sphere_base, y) == pytest.approx(closed, abs=1e-6)


def test_heat_model_rejects_unknown_mode(sphere):
    with pytest.raises(SamplerError):
        HeatKernelModel(sphere, "fast")


def test_exact_mode_needs_closed_form(ellipsoid):
    with pytest.raises(SamplerError):
        HeatKernelModel(ellipsoid, MODE_EXACT)


def test_small_time_check_rejects_far_targets(sphere, sphere_base):
    model = HeatKernelModel(sphere, MODE_SMALL_TIME)
    far = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 0] * 3.0)
    with pytest.raises(SamplerError):
        model.check_small_time(sphere_base, far)


def test_euclidean_exact_drift(plane):
    model = HeatKernelModel(plane, MODE_EXACT)
    drift = model.grad_log_p(0.5, np.zeros(2), np.array([1.0, 2.0]))
    np.testing.assert_allclose(drift, [2.0, 4.0])


def test_drift_is_tangent(sphere, sphere_base):
    model = HeatKernelModel(sphere, MODE_EXACT)
    y = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 1] * 0.5)
    drift = model.grad_log_p(0.1, sphere_base, y)
    assert abs(drift @ sphere_base) < 1e-10
    assert drift @ sphere.log(sphere_base, y) > 0


def test_bm_path_stays_on_sphere(sphere, sphere_base):
    path = sample_bm(sphere, sphere_base, 0.1, steps=64, seed=1)
    assert path.points.shape == (65, 3)
    np.testing.assert_allclose(np.linalg.norm(path.points, axis=1), 1.0, atol=1e-10)
    assert path.provenance == "bm"


def test_bridge_ends_at_target(sphere, sphere_base, tmp_path):
    y = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 0] * 0.4)
    bridge = sample_bridge(sphere, sphere_base, y, 0.05, steps=64, seed=2)
    np.testing.assert_allclose(bridge.points[-1], y, atol=1e-12)
    np.testing.assert_allclose(bridge.points[0], sphere_base, atol=1e-12)
    bridge.dump(tmp_path / "b")
    meta = json.loads((tmp_path / "b.json").read_text())
    assert meta["steps"] == 64 and meta["master_seed"] == 2
    assert (tmp_path / "b.csv").exists()


def test_path_is_identical_whichever_block_simulates_it(sphere, sphere_base):
    alone = simulate_block(sphere, sphere_base, None, 0.1, 16, 5, 3, 4, record_points=True)
    inside = simulate_block(sphere, sphere_base, None, 0.1, 16, 5, 0, 6, record_points=True)
    np.testing.assert_array_equal(alone.points[0], inside.points[3])


def test_bad_parameters_rejected(sphere, sphere_base):
    with pytest.raises(SamplerError):
        sample_bm(sphere, sphere_base, 0.0)
    with pytest.raises(SamplerError):
        sample_bridge(sphere, sphere_base, sphere_base, 0.1, chart_radius=10.0)
