# algebra/truncated_tensor.py
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.constants import MAX_LEVEL_LARGE_DIM, MAX_LEVEL_SMALL_DIM, SMALL_DIM

logger = logging.getLogger(__name__)

Scalar = Union[int, float, np.floating]


class TensorShapeError(ValueError):
    """Custom exception for truncated tensor contract violations"""
    pass


def level_cap(ambient_dim: int) -> int:
    """Largest max_level allowed for an ambient dimension."""
    return MAX_LEVEL_SMALL_DIM if ambient_dim <= SMALL_DIM else MAX_LEVEL_LARGE_DIM


def _outer(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # flat row-major outer product, broadcasting over leading batch axes
    prod = x[..., :, None] * y[..., None, :]
    return prod.reshape(prod.shape[:-2] + (-1,))


class TruncatedTensor:
    """
    Element of the truncated tensor algebra T^(m)(R^N).

    Level k is stored flat with N**k entries in row-major multi-index
    order. A leading batch shape is allowed (one tensor per path or per
    grid node); every operation broadcasts over it.
    """

    __slots__ = ("ambient_dim", "max_level", "levels")

    def __init__(self, levels: Sequence[np.ndarray], ambient_dim: int):
        if ambient_dim < 1:
            raise TensorShapeError(f"ambient_dim must be positive, got {ambient_dim}")
        max_level = len(levels) - 1
        if max_level < 0:
            raise TensorShapeError("at least level 0 is required")
        if max_level > level_cap(ambient_dim):
            raise TensorShapeError(
                f"max_level {max_level} exceeds cap {level_cap(ambient_dim)} for N={ambient_dim}"
            )

        arrays = [np.asarray(lv, dtype=float) for lv in levels]
        batch = arrays[0].shape[:-1] if arrays[0].ndim else ()
        fixed = []
        for k, arr in enumerate(arrays):
            if arr.ndim == 0:
                arr = arr.reshape(1)
            if arr.shape[-1] != ambient_dim ** k:
                raise TensorShapeError(
                    f"level {k} has {arr.shape[-1]} entries, expected {ambient_dim ** k}"
                )
            if arr.shape[:-1] != batch:
                raise TensorShapeError(f"level {k} batch shape {arr.shape[:-1]} != {batch}")
            fixed.append(arr)

        self.ambient_dim = ambient_dim
        self.max_level = max_level
        self.levels: Tuple[np.ndarray, ...] = tuple(fixed)

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @classmethod
    def zeros(cls, ambient_dim: int, max_level: int, batch: Tuple[int, ...] = ()) -> "TruncatedTensor":
        return cls([np.zeros(batch + (ambient_dim ** k,)) for k in range(max_level + 1)], ambient_dim)

    @classmethod
    def unit(cls, ambient_dim: int, max_level: int, batch: Tuple[int, ...] = ()) -> "TruncatedTensor":
        levels = [np.zeros(batch + (ambient_dim ** k,)) for k in range(max_level + 1)]
        levels[0][...] = 1.0
        return cls(levels, ambient_dim)

    @classmethod
    def from_level1(cls, v: np.ndarray, max_level: int) -> "TruncatedTensor":
        """Lie element with level-1 part v and zeros elsewhere."""
        v = np.asarray(v, dtype=float)
        n = v.shape[-1]
        out = cls.zeros(n, max_level, v.shape[:-1])
        if max_level >= 1:
            out.levels[1][...] = v
        return out

    @classmethod
    def from_level(cls, k: int, values: np.ndarray, ambient_dim: int, max_level: int) -> "TruncatedTensor":
        """Homogeneous element sitting on a single level. Levels above max_level truncate to zero."""
        values = np.asarray(values, dtype=float)
        flat = values.reshape(values.shape[: values.ndim - k] + (-1,)) if k > 0 else values[..., None]
        out = cls.zeros(ambient_dim, max_level, flat.shape[:-1])
        if k <= max_level:
            out.levels[k][...] = flat
        return out

    # ------------------------------------------------------------------
    # shape helpers
    # ------------------------------------------------------------------

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.levels[0].shape[:-1]

    def level(self, k: int, shaped: bool = False) -> np.ndarray:
        if not 0 <= k <= self.max_level:
            raise TensorShapeError(f"level {k} out of range 0..{self.max_level}")
        arr = self.levels[k]
        if shaped:
            return arr.reshape(self.batch_shape + (self.ambient_dim,) * k)
        return arr

    def scalar(self) -> np.ndarray:
        return self.levels[0][..., 0]

    def truncate(self, max_level: int) -> "TruncatedTensor":
        if max_level > self.max_level:
            extra = [np.zeros(self.batch_shape + (self.ambient_dim ** k,))
                     for k in range(self.max_level + 1, max_level + 1)]
            return TruncatedTensor(list(self.levels) + extra, self.ambient_dim)
        return TruncatedTensor(self.levels[: max_level + 1], self.ambient_dim)

    def take(self, index) -> "TruncatedTensor":
        """Select along the batch axes (numpy indexing on the leading axes)."""
        return TruncatedTensor([lv[index] for lv in self.levels], self.ambient_dim)

    def mean(self, axis: int = 0) -> "TruncatedTensor":
        return TruncatedTensor([lv.mean(axis=axis) for lv in self.levels], self.ambient_dim)

    def sum(self, axis: int = 0) -> "TruncatedTensor":
        return TruncatedTensor([lv.sum(axis=axis) for lv in self.levels], self.ambient_dim)

    def copy(self) -> "TruncatedTensor":
        return TruncatedTensor([lv.copy() for lv in self.levels], self.ambient_dim)

    def map_levels(self, fn) -> "TruncatedTensor":
        return TruncatedTensor([fn(lv) for lv in self.levels], self.ambient_dim)

    def _check_compatible(self, other: "TruncatedTensor"):
        if not isinstance(other, TruncatedTensor):
            raise TensorShapeError(f"expected TruncatedTensor, got {type(other).__name__}")
        if other.ambient_dim != self.ambient_dim or other.max_level != self.max_level:
            raise TensorShapeError(
                f"mismatch: (N={self.ambient_dim}, m={self.max_level}) vs "
                f"(N={other.ambient_dim}, m={other.max_level})"
            )

    # ------------------------------------------------------------------
    # vector space structure
    # ------------------------------------------------------------------

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_compatible(other)
        return TruncatedTensor([a + b for a, b in zip(self.levels, other.levels)], self.ambient_dim)

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_compatible(other)
        return TruncatedTensor([a - b for a, b in zip(self.levels, other.levels)], self.ambient_dim)

    def __neg__(self) -> "TruncatedTensor":
        return self.map_levels(lambda lv: -lv)

    def __mul__(self, c: Scalar) -> "TruncatedTensor":
        if isinstance(c, TruncatedTensor):
            raise TensorShapeError("use mul(a, b) for the tensor product")
        c = np.asarray(c, dtype=float)
        if c.ndim:
            c = c[..., None]
        return self.map_levels(lambda lv: lv * c)

    __rmul__ = __mul__

    def __truediv__(self, c: Scalar) -> "TruncatedTensor":
        return self * (1.0 / np.asarray(c, dtype=float))

    def allclose(self, other: "TruncatedTensor", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        self._check_compatible(other)
        return all(np.allclose(a, b, atol=atol, rtol=rtol) for a, b in zip(self.levels, other.levels))

    def __repr__(self) -> str:
        return f"TruncatedTensor(N={self.ambient_dim}, m={self.max_level}, batch={self.batch_shape})"

    # ------------------------------------------------------------------
    # file format
    # ------------------------------------------------------------------

    def to_json(self) -> Dict:
        if self.batch_shape:
            raise TensorShapeError("only unbatched tensors can be serialized")
        return {
            "ambient_dim": self.ambient_dim,
            "max_level": self.max_level,
            "levels": [lv.tolist() for lv in self.levels],
        }

    @classmethod
    def from_json(cls, payload: Dict) -> "TruncatedTensor":
        levels = payload["levels"]
        if len(levels) != payload["max_level"] + 1:
            raise TensorShapeError("levels list does not match max_level")
        return cls([np.asarray(lv, dtype=float) for lv in levels], int(payload["ambient_dim"]))


# ----------------------------------------------------------------------
# algebra operations
# ----------------------------------------------------------------------


def mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """
    Truncated tensor product (a ⊗ b)_n = Σ_k a_k ⊗ b_{n-k}.

    Args:
        a: left factor
        b: right factor, same ambient_dim and max_level

    Returns:
        Product truncated at max_level
    """
    a._check_compatible(b)
    out = []
    for n in range(a.max_level + 1):
        acc = _outer(a.levels[0], b.levels[n])
        for k in range(1, n + 1):
            acc = acc + _outer(a.levels[k], b.levels[n - k])
        out.append(acc)
    return TruncatedTensor(out, a.ambient_dim)


def exp(a: TruncatedTensor) -> TruncatedTensor:
    """Tensor exponential of an element with zero scalar part (Horner form)."""
    if np.any(a.scalar() != 0.0):
        raise TensorShapeError("exp requires a zero level-0 component")
    one = TruncatedTensor.unit(a.ambient_dim, a.max_level, a.batch_shape)
    result = one
    for k in range(a.max_level, 0, -1):
        result = one + mul(a, result) / k
    return result


def inverse(g: TruncatedTensor, tol: float = 1e-12) -> TruncatedTensor:
    """Inverse of a group-like element: Σ_k (1 - g)^k, truncated."""
    if not np.allclose(g.scalar(), 1.0, atol=tol, rtol=0.0):
        raise TensorShapeError("inverse requires level-0 component equal to 1")
    one = TruncatedTensor.unit(g.ambient_dim, g.max_level, g.batch_shape)
    x = g - one
    result = one
    for _ in range(g.max_level):
        result = one - mul(x, result)
    return result


def segment_extend(a: TruncatedTensor, delta: np.ndarray) -> TruncatedTensor:
    """
    Chen step a ⊗ exp(delta) for a level-1 increment, one Horner pass per level.

    Args:
        a: running signature (batch shape B)
        delta: increments of shape B + (N,)

    Returns:
        Extended signature
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1] != a.ambient_dim:
        raise TensorShapeError(f"increment dimension {delta.shape[-1]} != {a.ambient_dim}")
    out: List[Optional[np.ndarray]] = [None] * (a.max_level + 1)
    out[0] = a.levels[0] * np.ones(delta.shape[:-1] + (1,))
    for n in range(1, a.max_level + 1):
        acc = _outer(a.levels[0], delta / n)
        for k in range(1, n):
            acc = _outer(acc + a.levels[k], delta / (n - k))
        out[n] = acc + a.levels[n]
    return TruncatedTensor(out, a.ambient_dim)


def hs_norm(a: TruncatedTensor, n: int) -> Union[float, np.ndarray]:
    """Hilbert-Schmidt norm of level n."""
    if not 0 <= n <= a.max_level:
        raise TensorShapeError(f"level {n} out of range 0..{a.max_level}")
    value = np.linalg.norm(a.levels[n], axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def normalized_level_norm(a: TruncatedTensor, n: int) -> Union[float, np.ndarray]:
    """(n! * ||pi_n a||)^(1/n); the scalar magnitude at n = 0."""
    if n == 0:
        value = np.abs(a.scalar())
        return float(value) if np.ndim(value) == 0 else value
    norm = np.asarray(hs_norm(a, n), dtype=float)
    value = np.power(math.factorial(n) * norm, 1.0 / n)
    return float(value) if np.ndim(value) == 0 else value


def contract_24(xi: np.ndarray, ambient_dim: Optional[int] = None) -> np.ndarray:
    """
    Trace a level-4 tensor over its 2nd and 4th slots.

    Args:
        xi: level-4 slice, flat (..., N**4) or shaped (..., N, N, N, N)
        ambient_dim: N, required for flat input

    Returns:
        (..., N, N) array (cξ)(u, w) = Σ_a ξ(u, a, w, a)
    """
    xi = np.asarray(xi, dtype=float)
    if ambient_dim is not None and xi.shape[-4:] != (ambient_dim,) * 4:
        xi = xi.reshape(xi.shape[:-1] + (ambient_dim,) * 4)
    if xi.ndim < 4 or len(set(xi.shape[-4:])) != 1:
        raise TensorShapeError(f"cannot read {xi.shape} as a level-4 tensor")
    return np.einsum("...uawa->...uw", xi)


def symmetric_part_2(a: TruncatedTensor) -> np.ndarray:
    s = a.level(2, shaped=True)
    return 0.5 * (s + np.swapaxes(s, -1, -2))


def antisymmetric_part_2(a: TruncatedTensor) -> np.ndarray:
    s = a.level(2, shaped=True)
    return 0.5 * (s - np.swapaxes(s, -1, -2))
