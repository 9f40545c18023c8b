# tests/test_signature.py
import math

import numpy as np
import pytest

from algebra.truncated_tensor import (
    TensorShapeError,
    TruncatedTensor,
    exp,
    inverse,
    mul,
    normalized_level_norm,
    segment_extend,
    symmetric_part_2,
)
from signature.paths import AmbientPath, geodesic_path, sig_geodesic, sig_piecewise_linear, signature_of_points


def _polyline(rng, k=6, n=3):
    return AmbientPath.uniform(np.cumsum(rng.normal(size=(k + 1, n)), axis=0))


def test_single_segment_is_exponential(rng):
    pts = rng.normal(size=(2, 3))
    sig = sig_piecewise_linear(AmbientPath.uniform(pts), 5)
    assert sig.allclose(exp(TruncatedTensor.from_level1(pts[1] - pts[0], 5)), atol=1e-12)


def test_chen_identity_for_concatenation(rng):
    a = _polyline(rng)
    b = AmbientPath.uniform(a.points[-1] + np.cumsum(np.vstack([np.zeros(3), rng.normal(size=(4, 3))]), axis=0))
    joined = sig_piecewise_linear(a.concatenate(b), 4)
    product = mul(sig_piecewise_linear(a, 4), sig_piecewise_linear(b, 4))
    assert joined.allclose(product, atol=1e-10)


def test_reversal_gives_group_inverse(rng):
    path = _polyline(rng)
    sig = sig_piecewise_linear(path, 4)
    back = sig_piecewise_linear(path.reversed(), 4)
    assert back.allclose(inverse(sig), atol=1e-9)


def test_level_two_shuffle_symmetry(rng):
    path = _polyline(rng)
    sig = sig_piecewise_linear(path, 2)
    inc = path.points[-1] - path.points[0]
    np.testing.assert_allclose(symmetric_part_2(sig), 0.5 * np.outer(inc, inc), atol=1e-12)


def test_translation_and_reparametrization_invariance(rng):
    path = _polyline(rng)
    sig = sig_piecewise_linear(path, 3)
    moved = AmbientPath(path.points + 5.0, path.times ** 2, "user")
    assert sig_piecewise_linear(moved, 3).allclose(sig, atol=1e-12)


def test_single_point_path_gives_unit():
    sig = sig_piecewise_linear(AmbientPath.uniform(np.zeros((1, 2))), 3)
    assert sig.allclose(TruncatedTensor.unit(2, 3))


def test_batched_points_match_individual_paths(rng):
    pts = rng.normal(size=(4, 5, 2))
    batched = signature_of_points(pts, 3)
    for i in range(4):
        assert batched.take(i).allclose(signature_of_points(pts[i], 3), atol=1e-13)


def test_level_above_cap_rejected(rng):
    with pytest.raises(TensorShapeError):
        signature_of_points(rng.normal(size=(3, 5)), 9)


def test_bad_paths_rejected():
    with pytest.raises(ValueError):
        AmbientPath(np.zeros((3, 2)), np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ValueError):
        AmbientPath(np.zeros((3, 2)), np.linspace(0, 1, 3), provenance="nowhere")


def test_csv_keeps_points(tmp_path, rng):
    path = _polyline(rng)
    path.to_csv(tmp_path / "p.csv")
    loaded = AmbientPath.from_csv(tmp_path / "p.csv")
    np.testing.assert_allclose(loaded.points, path.points, atol=0, rtol=1e-15)


def test_straight_segment_normalized_norm_is_length():
    sig = sig_piecewise_linear(AmbientPath.uniform(np.array([[0.0, 0.0], [0.6, 0.8]])), 6)
    for n in range(1, 7):
        assert normalized_level_norm(sig, n) == pytest.approx(1.0, rel=1e-12)


def test_geodesic_on_sphere_samples_arc_length(sphere, sphere_base):
    v = sphere.tangent_frame(sphere_base)[:, 0] * 0.8
    y = sphere.exp(sphere_base, v)
    path = geodesic_path(sphere, sphere_base, y)
    steps = np.linalg.norm(np.diff(path.points, axis=0), axis=1)
    assert path.meta["length"] == pytest.approx(0.8, abs=1e-10)
    assert np.ptp(steps) < 1e-10
    np.testing.assert_allclose(np.linalg.norm(path.points, axis=1), 1.0, atol=1e-12)


def test_geodesic_signature_level_one_is_chord(sphere, sphere_base):
    y = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 1] * 0.5)
    sig = sig_geodesic(sphere, sphere_base, y, 3)
    np.testing.assert_allclose(sig.level(1), y - sphere_base, atol=1e-12)


@pytest.mark.slow
def test_geodesic_signature_recovers_distance_at_high_level(sphere, sphere_base):
    y = sphere.exp(sphere_base, sphere.tangent_frame(sphere_base)[:, 0] * 0.8)
    sig = sig_geodesic(sphere, sphere_base, y, 12)
    assert normalized_level_norm(sig, 12) == pytest.approx(0.8, rel=0.1)
    assert math.isfinite(normalized_level_norm(sig, 12))


def test_library_signature_matches_streaming_chen_steps(rng):
    pts = np.cumsum(rng.normal(size=(4, 9, 2)), axis=1)
    sig = signature_of_points(pts, 4)
    streamed = TruncatedTensor.unit(2, 4, (4,))
    for delta in np.moveaxis(np.diff(pts, axis=1), 1, 0):
        streamed = segment_extend(streamed, delta)
    assert sig.allclose(streamed, atol=1e-10)
    np.testing.assert_allclose(sig.level(0), 1.0)
