# tests/test_truncated_tensor.py
import itertools
import math

import numpy as np
import pytest

from algebra.truncated_tensor import (
    TensorShapeError,
    TruncatedTensor,
    antisymmetric_part_2,
    contract_24,
    exp,
    hs_norm,
    inverse,
    level_cap,
    mul,
    normalized_level_norm,
    segment_extend,
    symmetric_part_2,
)
from tests.conftest import random_lie, random_tensor


def test_unit_is_two_sided_identity(rng):
    a = random_tensor(rng, 3, 4)
    one = TruncatedTensor.unit(3, 4)
    assert mul(one, a).allclose(a)
    assert mul(a, one).allclose(a)


def test_product_is_associative(rng):
    a, b, c = (random_tensor(rng, 2, 5) for _ in range(3))
    left = mul(mul(a, b), c)
    right = mul(a, mul(b, c))
    assert left.allclose(right, atol=1e-9)


def test_product_distributes_over_addition(rng):
    a, b, c = (random_tensor(rng, 3, 3) for _ in range(3))
    assert mul(a, b + c).allclose(mul(a, b) + mul(a, c), atol=1e-12)


def test_level_two_of_product_matches_outer_products(rng):
    a, b = random_tensor(rng, 2, 2), random_tensor(rng, 2, 2)
    got = mul(a, b).level(2, shaped=True)
    want = (
        a.levels[0][0] * b.level(2, shaped=True)
        + np.outer(a.levels[1], b.levels[1])
        + a.level(2, shaped=True) * b.levels[0][0]
    )
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_exp_of_level_one_is_scaled_tensor_powers():
    v = np.array([0.3, -1.2])
    e = exp(TruncatedTensor.from_level1(v, 4))
    for k in range(5):
        power = np.ones(1)
        for _ in range(k):
            power = np.outer(power, v).ravel()
        np.testing.assert_allclose(e.level(k), power / math.factorial(k), atol=1e-14)


def test_exp_requires_zero_scalar(rng):
    with pytest.raises(TensorShapeError):
        exp(random_tensor(rng, 2, 3))


def test_inverse_of_group_like_element(rng):
    g = exp(random_lie(rng, 3, 4))
    one = TruncatedTensor.unit(3, 4)
    assert mul(g, inverse(g)).allclose(one, atol=1e-10)
    assert mul(inverse(g), g).allclose(one, atol=1e-10)


def test_inverse_rejects_non_unit_scalar(rng):
    a = random_tensor(rng, 2, 2)
    a.levels[0][...] = 2.0
    with pytest.raises(TensorShapeError):
        inverse(a)


def test_segment_extend_is_chen_step(rng):
    a = exp(random_lie(rng, 2, 6))
    delta = rng.normal(size=2)
    expected = mul(a, exp(TruncatedTensor.from_level1(delta, 6)))
    assert segment_extend(a, delta).allclose(expected, atol=1e-12)


def test_segment_extend_broadcasts_over_batch(rng):
    a = TruncatedTensor.unit(3, 3, (5,))
    deltas = rng.normal(size=(5, 3))
    out = segment_extend(a, deltas)
    assert out.batch_shape == (5,)
    for i in range(5):
        single = exp(TruncatedTensor.from_level1(deltas[i], 3))
        assert out.take(i).allclose(single, atol=1e-12)


def test_level_cap_enforced():
    assert level_cap(3) == 12
    assert level_cap(5) == 8
    with pytest.raises(TensorShapeError):
        TruncatedTensor.zeros(5, 9)
    TruncatedTensor.zeros(4, 12)


def test_mismatched_shapes_rejected(rng):
    with pytest.raises(TensorShapeError):
        mul(random_tensor(rng, 2, 3), random_tensor(rng, 2, 4))
    with pytest.raises(TensorShapeError):
        random_tensor(rng, 2, 3) + random_tensor(rng, 3, 3)
    with pytest.raises(TensorShapeError):
        TruncatedTensor([np.ones(1), np.ones(3)], 2)


def test_contract_24_matches_brute_force(rng):
    n = 3
    xi = rng.normal(size=(n,) * 4)
    brute = np.zeros((n, n))
    for u, w, a in itertools.product(range(n), repeat=3):
        brute[u, w] += xi[u, a, w, a]
    np.testing.assert_allclose(contract_24(xi), brute, atol=1e-14)
    np.testing.assert_allclose(contract_24(xi.ravel(), ambient_dim=n), brute, atol=1e-14)


def test_contract_24_rejects_wrong_rank():
    with pytest.raises(TensorShapeError):
        contract_24(np.zeros((3, 3)))


def test_norms():
    v = np.array([3.0, 4.0])
    sig = exp(TruncatedTensor.from_level1(v, 3))
    assert hs_norm(sig, 1) == pytest.approx(5.0)
    # ||v^{⊗n}/n!|| = |v|^n/n!, so the normalized norm is |v| at every level
    for n in range(1, 4):
        assert normalized_level_norm(sig, n) == pytest.approx(5.0)
    assert normalized_level_norm(sig, 0) == pytest.approx(1.0)


def test_symmetric_and_antisymmetric_parts_split_level_two(rng):
    a = random_tensor(rng, 3, 2)
    total = symmetric_part_2(a) + antisymmetric_part_2(a)
    np.testing.assert_allclose(total, a.level(2, shaped=True), atol=1e-14)
    np.testing.assert_allclose(antisymmetric_part_2(a), -antisymmetric_part_2(a).T, atol=1e-14)


def test_json_format_round_trip(rng):
    a = random_tensor(rng, 2, 3)
    payload = a.to_json()
    assert payload["ambient_dim"] == 2 and payload["max_level"] == 3
    assert len(payload["levels"][3]) == 8
    assert TruncatedTensor.from_json(payload).allclose(a)


def test_batched_tensor_cannot_be_serialized():
    with pytest.raises(TensorShapeError):
        TruncatedTensor.unit(2, 2, (3,)).to_json()


def test_scalar_multiplication_broadcasts_per_batch_entry():
    a = TruncatedTensor.unit(2, 1, (3,))
    scaled = a * np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(scaled.scalar(), [1.0, 2.0, 3.0])


def test_from_level_above_cap_truncates_to_zero():
    a = TruncatedTensor.from_level(2, np.ones((3, 3)), 3, 1)
    assert a.max_level == 1
    assert a.allclose(TruncatedTensor.zeros(3, 1))
    b = TruncatedTensor.from_level(2, np.ones((3, 3)), 3, 2)
    np.testing.assert_allclose(b.level(2, shaped=True), np.ones((3, 3)))
