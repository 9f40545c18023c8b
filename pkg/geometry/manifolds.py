# geometry/manifolds.py
import logging
import math
from abc import ABC, abstractmethod
from typing import Dict, Optional, Sequence

import numpy as np

from geometry.finite_difference import first_derivative, second_derivative, third_derivative

logger = logging.getLogger(__name__)


class GeometryError(Exception):
    """Custom exception for geometry evaluation failures"""
    pass


class CutLocusError(GeometryError):
    """Raised when a point lies at or beyond the cut locus"""
    pass


# factor codes for trig-product embeddings
ONE, SIN, COS = 0, 1, 2


class EmbeddedManifold(ABC):
    """
    An isometrically embedded manifold M ⊂ R^N.

    Points are ambient vectors on M, tangent vectors are ambient vectors in
    T_pM (the induced metric is the Euclidean one). Chart points x live in
    R^d and are mapped by `embed`. Every method accepts leading batch axes.
    """

    name: str = "manifold"
    chart_dim: int
    ambient_dim: int
    injectivity_radius: float
    intrinsically_flat: bool = False

    def __init__(self, params: Optional[Dict[str, float]] = None):
        self.params = dict(params or {})

    def spec_string(self) -> str:
        if not self.params:
            return self.name
        body = ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.name}:{body}"

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec_string()})"

    # ------------------------------------------------------------------
    # chart and embedding
    # ------------------------------------------------------------------

    @abstractmethod
    def embed(self, x: np.ndarray) -> np.ndarray:
        """Chart point(s) (..., d) -> ambient point(s) (..., N)."""

    @abstractmethod
    def chart(self, p: np.ndarray) -> np.ndarray:
        """Ambient point(s) on M -> chart coordinates."""

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """∂_i F at a chart point, shape (N, d)."""
        return first_derivative(self.embed, x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """∂_ij F, shape (N, d, d)."""
        return second_derivative(self.embed, x)

    def third_derivative(self, x: np.ndarray) -> np.ndarray:
        """∂_ijk F, shape (N, d, d, d)."""
        return third_derivative(self.embed, x)

    def base_chart_point(self) -> np.ndarray:
        """A regular chart point used as default base point."""
        return np.zeros(self.chart_dim)

    def sample_chart_points(self, n: int) -> np.ndarray:
        """Grid of regular chart points for catalog checks, shape (n**d, d)."""
        grids = np.meshgrid(*[np.linspace(-1.0, 1.0, n)] * self.chart_dim, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    # ------------------------------------------------------------------
    # ambient structure
    # ------------------------------------------------------------------

    @abstractmethod
    def project(self, p: np.ndarray) -> np.ndarray:
        """Retraction of nearby ambient points onto M."""

    @abstractmethod
    def tangent_projection(self, p: np.ndarray) -> np.ndarray:
        """Orthogonal projection π_p onto T_pM, shape (..., N, N)."""

    def tangent_frame(self, p: np.ndarray) -> np.ndarray:
        """Orthonormal basis of T_pM as columns, shape (N, d)."""
        p = np.asarray(p, dtype=float)
        jac = self.jacobian(self.chart(p))
        q, _ = np.linalg.qr(jac)
        return q[:, : self.chart_dim]

    @abstractmethod
    def exp(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Exponential map at p applied to the tangent vector v."""

    @abstractmethod
    def log(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Inverse of exp within the injectivity radius; raises CutLocusError."""

    def log_safe(self, p: np.ndarray, q: np.ndarray):
        """Batched log returning (vectors, valid mask); cut-locus rows come back as zeros."""
        p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
        try:
            return self.log(p, q), np.ones(p.shape[:-1], dtype=bool)
        except CutLocusError:
            pass
        flat_p = p.reshape(-1, self.ambient_dim)
        flat_q = q.reshape(-1, self.ambient_dim)
        out = np.zeros_like(flat_p)
        ok = np.ones(flat_p.shape[0], dtype=bool)
        for i in range(flat_p.shape[0]):
            try:
                out[i] = self.log(flat_p[i], flat_q[i])
            except CutLocusError:
                ok[i] = False
        return out.reshape(p.shape), ok.reshape(p.shape[:-1])

    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        value = np.linalg.norm(self.log(p, q), axis=-1)
        return float(value) if np.ndim(value) == 0 else value

    def geodesic_points(self, p: np.ndarray, q: np.ndarray, n_segments: int) -> np.ndarray:
        """Points of the minimizing geodesic p -> q, uniform in arc length, shape (n+1, N)."""
        v = self.log(p, q)
        s = np.linspace(0.0, 1.0, n_segments + 1)[:, None]
        pts = self.exp(np.broadcast_to(p, (n_segments + 1, self.ambient_dim)), s * v)
        pts[0] = p
        pts[-1] = q
        return pts


class TrigProductManifold(EmbeddedManifold):
    """
    Embedding whose components are amplitude * Π_m trig_m(ω_m x_m).

    Covers the circle, round spheres, the Clifford torus and the ellipsoid,
    and gives closed-form derivatives of every order.
    """

    # set by subclasses: codes (N, d), amplitudes (N,), frequencies (d,)
    codes: np.ndarray
    amplitudes: np.ndarray
    frequencies: np.ndarray

    def _partial(self, x: np.ndarray, orders: Sequence[int]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.amplitudes, x.shape[:-1] + (self.ambient_dim,)).copy()
        for m, n in enumerate(orders):
            w = self.frequencies[m]
            arg = w * x[..., m: m + 1] + n * math.pi / 2.0
            scale = w ** n
            sin_f = scale * np.sin(arg)
            cos_f = scale * np.cos(arg)
            one_f = np.full_like(sin_f, 1.0 if n == 0 else 0.0)
            codes = self.codes[:, m]
            factor = np.where(codes == SIN, sin_f, np.where(codes == COS, cos_f, one_f))
            out = out * factor
        return out

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self._partial(x, [0] * self.chart_dim)

    def _derivative_tensor(self, x: np.ndarray, order: int) -> np.ndarray:
        d = self.chart_dim
        shape = (self.ambient_dim,) + (d,) * order
        out = np.zeros(shape)
        for idx in np.ndindex(*(d,) * order):
            counts = [idx.count(m) for m in range(d)]
            out[(slice(None),) + idx] = self._partial(x, counts)
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self._derivative_tensor(x, 1)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self._derivative_tensor(x, 2)

    def third_derivative(self, x: np.ndarray) -> np.ndarray:
        return self._derivative_tensor(x, 3)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))
