# tests/test_expected_signature.py
import numpy as np
import pytest

from algebra.truncated_tensor import TensorShapeError
from estimator.distance import reconstruct_distance, time_schedule
from estimator.expected_signature import EstimatorError, expected_signature


def test_same_seed_same_estimate_for_any_worker_count(sphere, sphere_base):
    one = expected_signature(sphere, sphere_base, None, 0.05, 2, 200, seed=11, steps=16, workers=1)
    four = expected_signature(sphere, sphere_base, None, 0.05, 2, 200, seed=11, steps=16, workers=4)
    for a, b in zip(one.mean.levels, four.mean.levels):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(one.stderr, four.stderr):
        np.testing.assert_array_equal(a, b)


def test_different_seeds_differ(sphere, sphere_base):
    a = expected_signature(sphere, sphere_base, None, 0.05, 2, 64, seed=1, steps=8)
    b = expected_signature(sphere, sphere_base, None, 0.05, 2, 64, seed=2, steps=8)
    assert not np.allclose(a.mean.levels[1], b.mean.levels[1])


def test_euclidean_bm_level_two_diagonal(plane):
    t = 0.3
    est = expected_signature(plane, np.zeros(2), None, t, 2, 4000, seed=3, steps=8)
    diag = np.diag(est.mean.level(2, shaped=True))
    err = np.diag(est.level_stderr(2, shaped=True))
    assert np.all(np.abs(diag - t / 2) <= 4 * err + 1e-12)


def test_loop_level_one_vanishes_with_antithetic_pairs(sphere, sphere_base):
    est = expected_signature(sphere, sphere_base, sphere_base, 0.05, 3, 400, seed=4, steps=32)
    assert est.meta["antithetic"]
    assert np.all(np.abs(est.mean.levels[1]) <= 4 * est.stderr[1] + 1e-10)


def test_validation(sphere, sphere_base):
    with pytest.raises(EstimatorError):
        expected_signature(sphere, sphere_base, None, 0.05, 2, 1)
    with pytest.raises(EstimatorError):
        expected_signature(sphere, sphere_base, None, 0.05, 0, 10)
    with pytest.raises(EstimatorError):
        expected_signature(sphere, sphere_base, None, 0.05, 2, 10, discard_policy="ignore")
    with pytest.raises(EstimatorError):
        expected_signature(sphere, sphere_base, sphere_base, 0.05, 3, 10, second_moment=True)
    with pytest.raises(TensorShapeError):
        expected_signature(sphere, sphere_base, None, 0.05, 13, 10)


def test_second_moment_relation_is_reported(sphere, sphere_base):
    est = expected_signature(sphere, sphere_base, sphere_base, 0.05, 4, 64, seed=5, steps=16, second_moment=True)
    assert est.half_outer.shape == (81,)
    assert est.relation_stderr.shape == (81,)


def test_tracker_counts_paths(sphere, sphere_base):
    from utils.run_tracker import RunTracker

    tracker = RunTracker()
    expected_signature(sphere, sphere_base, None, 0.05, 2, 100, seed=1, steps=8, tracker=tracker)
    assert tracker.paths_sampled == 100
    assert tracker.get_summary()["sampling"]["worker_blocks"] >= 1


def test_time_schedule():
    assert time_schedule(2, 1.0) == pytest.approx(1.0 / 64)
    assert time_schedule(100, 1.0) == pytest.approx(1e-4)


def test_distance_requires_points_inside_half_radius(sphere, sphere_base):
    far = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 0] * 2.0)
    with pytest.raises(EstimatorError):
        reconstruct_distance(sphere, sphere_base, far, 3, samples=10)


def test_distance_rows_are_reported_per_level(plane):
    report = reconstruct_distance(plane, np.zeros(2), np.array([0.6, 0.8]), 3, samples=64, steps=8, seed=2)
    assert [r.n for r in report.rows] == [2, 3]
    assert all(r.oracle == pytest.approx(1.0) for r in report.rows)


@pytest.mark.slow
def test_loop_levels_one_to_three_vanish(sphere, sphere_base):
    est = expected_signature(sphere, sphere_base, sphere_base, 0.05, 3, 100_000, seed=7)
    for k in (1, 2, 3):
        assert np.all(np.abs(est.mean.levels[k]) <= 4 * est.stderr[k] + 1e-12)


@pytest.mark.slow
def test_euclidean_distance_control(plane):
    report = reconstruct_distance(plane, np.zeros(2), np.array([0.6, 0.8]), 8, samples=100_000, seed=7)
    assert abs(report.rows[-1].estimate - 1.0) <= 0.1


@pytest.mark.slow
def test_sphere_distance_reconstruction(sphere, sphere_base):
    y = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 0] * 0.8)
    report = reconstruct_distance(sphere, sphere_base, y, 8, samples=100_000, seed=7)
    assert abs(report.rows[-1].estimate - 0.8) <= 0.1
