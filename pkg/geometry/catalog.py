# geometry/catalog.py
import logging
import math
from typing import Dict, Tuple

import numpy as np

from config.constants import RK4_STEP_FACTOR, SHOOTING_MAX_ITER, SHOOTING_TOL
from geometry.manifolds import (
    COS,
    ONE,
    SIN,
    CutLocusError,
    EmbeddedManifold,
    GeometryError,
    TrigProductManifold,
)

logger = logging.getLogger(__name__)

CUT_TOL = 1e-9


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _wrap(angle: np.ndarray, period: float) -> np.ndarray:
    """Wrap into [-period/2, period/2)."""
    return (angle + period / 2.0) % period - period / 2.0


class Euclidean(EmbeddedManifold):
    name = "euclidean"
    intrinsically_flat = True

    def __init__(self, d: int = 2):
        if d < 1:
            raise GeometryError(f"euclidean dimension must be positive, got {d}")
        super().__init__({"d": d})
        self.chart_dim = self.ambient_dim = int(d)
        self.injectivity_radius = math.inf

    def embed(self, x):
        return np.asarray(x, dtype=float).copy()

    def chart(self, p):
        return np.asarray(p, dtype=float).copy()

    def jacobian(self, x):
        return np.eye(self.ambient_dim)

    def hessian(self, x):
        return np.zeros((self.ambient_dim,) + (self.chart_dim,) * 2)

    def third_derivative(self, x):
        return np.zeros((self.ambient_dim,) + (self.chart_dim,) * 3)

    def project(self, p):
        return np.asarray(p, dtype=float)

    def tangent_projection(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(self.ambient_dim), p.shape[:-1] + (self.ambient_dim,) * 2).copy()

    def tangent_frame(self, p):
        return np.eye(self.ambient_dim)

    def exp(self, p, v):
        return np.asarray(p, dtype=float) + np.asarray(v, dtype=float)

    def log(self, p, q):
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)


class Circle(TrigProductManifold):
    name = "circle"
    intrinsically_flat = True

    def __init__(self, r: float = 1.0):
        if r <= 0:
            raise GeometryError(f"circle radius must be positive, got {r}")
        super().__init__({"r": r})
        self.radius = float(r)
        self.chart_dim, self.ambient_dim = 1, 2
        self.codes = np.array([[COS], [SIN]])
        self.amplitudes = np.array([r, r], dtype=float)
        self.frequencies = np.array([1.0])
        self.injectivity_radius = math.pi * r

    def chart(self, p):
        p = np.asarray(p, dtype=float)
        return np.arctan2(p[..., 1], p[..., 0])[..., None]

    def sample_chart_points(self, n):
        return np.linspace(-math.pi, math.pi, n, endpoint=False)[:, None]

    def project(self, p):
        return self.radius * _unit(np.asarray(p, dtype=float))

    def tangent_projection(self, p):
        nrm = _unit(np.asarray(p, dtype=float))
        return np.eye(2) - nrm[..., :, None] * nrm[..., None, :]

    def _tangent(self, theta):
        return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)

    def exp(self, p, v):
        theta = self.chart(p)[..., 0]
        speed = np.sum(np.asarray(v, dtype=float) * self._tangent(theta), axis=-1)
        return self.embed((theta + speed / self.radius)[..., None])

    def log(self, p, q):
        tp, tq = self.chart(p)[..., 0], self.chart(q)[..., 0]
        gap = _wrap(tq - tp, 2.0 * math.pi)
        if np.any(np.abs(gap) >= math.pi - CUT_TOL):
            raise CutLocusError("cut-locus: antipodal points on the circle")
        return (self.radius * gap)[..., None] * self._tangent(tp)


class Sphere(TrigProductManifold):
    """Round sphere S^d of radius r in R^{d+1}, hyperspherical chart."""

    name = "sphere"

    def __init__(self, d: int = 2, r: float = 1.0):
        if d < 2:
            raise GeometryError(f"sphere dimension must be >= 2 (use circle for d=1), got {d}")
        if r <= 0:
            raise GeometryError(f"sphere radius must be positive, got {r}")
        super().__init__({"d": d, "r": r})
        self.radius = float(r)
        self.chart_dim, self.ambient_dim = int(d), int(d) + 1
        codes = np.full((d + 1, d), ONE)
        for k in range(d + 1):
            codes[k, :k] = SIN
            if k < d:
                codes[k, k] = COS
        self.codes = codes
        self.amplitudes = np.full(d + 1, float(r))
        self.frequencies = np.ones(d)
        self.injectivity_radius = math.pi * r

    def base_chart_point(self):
        x = np.full(self.chart_dim, math.pi / 2.0 - 0.3)
        x[-1] = 0.4
        return x

    def sample_chart_points(self, n):
        grids = np.meshgrid(*[np.linspace(0.3, math.pi - 0.3, n)] * self.chart_dim, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        pts[:, -1] = pts[:, -1] * 2.0 - math.pi / 2.0
        return pts

    def chart(self, p):
        u = np.asarray(p, dtype=float) / self.radius
        d = self.chart_dim
        angles = []
        for k in range(d - 1):
            tail = np.linalg.norm(u[..., k + 1:], axis=-1)
            angles.append(np.arctan2(tail, u[..., k]))
        angles.append(np.arctan2(u[..., d], u[..., d - 1]))
        return np.stack(angles, axis=-1)

    def project(self, p):
        return self.radius * _unit(np.asarray(p, dtype=float))

    def tangent_projection(self, p):
        nrm = _unit(np.asarray(p, dtype=float))
        return np.eye(self.ambient_dim) - nrm[..., :, None] * nrm[..., None, :]

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        speed = np.linalg.norm(v, axis=-1, keepdims=True)
        angle = speed / self.radius
        direction = np.divide(v, speed, out=np.zeros_like(v), where=speed > 0)
        out = p * np.cos(angle) + self.radius * np.sin(angle) * direction
        return self.project(out)

    def log(self, p, q):
        pu = np.asarray(p, dtype=float) / self.radius
        qu = np.asarray(q, dtype=float) / self.radius
        c = np.sum(pu * qu, axis=-1, keepdims=True)
        w = qu - c * pu
        s = np.linalg.norm(w, axis=-1, keepdims=True)
        angle = np.arctan2(s, c)
        if np.any(angle >= math.pi - CUT_TOL):
            raise CutLocusError("cut-locus: antipodal points on the sphere")
        direction = np.divide(w, s, out=np.zeros_like(w), where=s > 0)
        return self.radius * angle * direction


class CliffordTorus(TrigProductManifold):
    """Flat torus S^1(1/√2) x S^1(1/√2) in R^4."""

    name = "clifford"
    intrinsically_flat = True

    def __init__(self):
        super().__init__({})
        self.chart_dim, self.ambient_dim = 2, 4
        self.codes = np.array([[COS, ONE], [SIN, ONE], [ONE, COS], [ONE, SIN]])
        self.amplitudes = np.full(4, 1.0 / math.sqrt(2.0))
        self.frequencies = np.full(2, math.sqrt(2.0))
        self.period = math.sqrt(2.0) * math.pi
        self.injectivity_radius = math.pi / math.sqrt(2.0)

    def base_chart_point(self):
        return np.array([0.3, -0.2])

    def chart(self, p):
        p = np.asarray(p, dtype=float)
        w = math.sqrt(2.0)
        return np.stack([np.arctan2(p[..., 1], p[..., 0]) / w, np.arctan2(p[..., 3], p[..., 2]) / w], axis=-1)

    def project(self, p):
        p = np.asarray(p, dtype=float)
        first = _unit(p[..., :2]) / math.sqrt(2.0)
        second = _unit(p[..., 2:]) / math.sqrt(2.0)
        return np.concatenate([first, second], axis=-1)

    def _frame(self, x):
        # columns ∂_1F, ∂_2F at chart points (..., 2) -> (..., 4, 2)
        w = math.sqrt(2.0)
        zero = np.zeros_like(x[..., 0])
        c1 = np.stack([-np.sin(w * x[..., 0]), np.cos(w * x[..., 0]), zero, zero], axis=-1)
        c2 = np.stack([zero, zero, -np.sin(w * x[..., 1]), np.cos(w * x[..., 1])], axis=-1)
        return np.stack([c1, c2], axis=-1)

    def tangent_projection(self, p):
        frame = self._frame(self.chart(p))
        return np.einsum("...ai,...bi->...ab", frame, frame)

    def exp(self, p, v):
        x = self.chart(p)
        u = np.einsum("...ai,...a->...i", self._frame(x), np.asarray(v, dtype=float))
        return self.embed(x + u)

    def log(self, p, q):
        xp, xq = self.chart(p), self.chart(q)
        gap = _wrap(xq - xp, self.period)
        if np.any(np.abs(gap) >= self.period / 2.0 - CUT_TOL):
            raise CutLocusError("cut-locus: half-period separation on the torus")
        return np.einsum("...ai,...i->...a", self._frame(xp), gap)


class Ellipsoid(TrigProductManifold):
    """
    Triaxial ellipsoid x²/a² + y²/b² + z²/c² = 1.

    Geodesics integrate the ambient constrained ODE with RK4 and radial
    retraction; log uses damped Gauss-Newton shooting.
    """

    name = "ellipsoid"

    def __init__(self, a: float = 1.0, b: float = 1.0, c: float = 1.2):
        if min(a, b, c) <= 0:
            raise GeometryError(f"ellipsoid axes must be positive, got {(a, b, c)}")
        super().__init__({"a": a, "b": b, "c": c})
        self.axes = np.array([a, b, c], dtype=float)
        self.chart_dim, self.ambient_dim = 2, 3
        # F(θ, φ) = (a sinθ cosφ, b sinθ sinφ, c cosθ)
        self.codes = np.array([[SIN, COS], [SIN, SIN], [COS, ONE]])
        self.amplitudes = self.axes.copy()
        self.frequencies = np.ones(2)
        k_max = max(a * a / (b * b * c * c), b * b / (a * a * c * c), c * c / (a * a * b * b))
        # conjugate-radius bound π/√K_max
        self.injectivity_radius = math.pi / math.sqrt(k_max)

    def base_chart_point(self):
        return np.array([1.0, 0.5])

    def sample_chart_points(self, n):
        grids = np.meshgrid(np.linspace(0.3, math.pi - 0.3, n), np.linspace(-math.pi, math.pi, n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def chart(self, p):
        u = np.asarray(p, dtype=float) / self.axes
        theta = np.arctan2(np.hypot(u[..., 0], u[..., 1]), u[..., 2])
        phi = np.arctan2(u[..., 1], u[..., 0])
        return np.stack([theta, phi], axis=-1)

    def _gradient(self, p):
        return 2.0 * p / self.axes ** 2

    def _normal(self, p):
        return _unit(self._gradient(p))

    def project(self, p):
        p = np.asarray(p, dtype=float)
        scale = np.sqrt(np.sum((p / self.axes) ** 2, axis=-1, keepdims=True))
        return p / scale

    def tangent_projection(self, p):
        nrm = self._normal(np.asarray(p, dtype=float))
        return np.eye(3) - nrm[..., :, None] * nrm[..., None, :]

    def tangent_frame(self, p):
        nrm = self._normal(np.asarray(p, dtype=float))
        return _tangent_basis(nrm)

    def _acceleration(self, x, v):
        grad = self._gradient(x)
        curv = np.sum(2.0 * v * v / self.axes ** 2, axis=-1, keepdims=True)
        return -curv / np.sum(grad * grad, axis=-1, keepdims=True) * grad

    def exp(self, p, v):
        x = np.array(p, dtype=float)
        vel = np.array(v, dtype=float)
        x, vel = np.broadcast_arrays(x, vel)
        x, vel = x.copy(), vel.copy()
        length = float(np.max(np.linalg.norm(vel, axis=-1))) if vel.size else 0.0
        n_steps = max(1, int(math.ceil(length / (RK4_STEP_FACTOR * self.injectivity_radius))))
        h = 1.0 / n_steps
        for _ in range(n_steps):
            k1x, k1v = vel, self._acceleration(x, vel)
            k2x, k2v = vel + 0.5 * h * k1v, self._acceleration(x + 0.5 * h * k1x, vel + 0.5 * h * k1v)
            k3x, k3v = vel + 0.5 * h * k2v, self._acceleration(x + 0.5 * h * k2x, vel + 0.5 * h * k2v)
            k4x, k4v = vel + h * k3v, self._acceleration(x + h * k3x, vel + h * k3v)
            x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            vel = vel + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            x = self.project(x)
            nrm = self._normal(x)
            vel = vel - np.sum(vel * nrm, axis=-1, keepdims=True) * nrm
        return x

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        p, q = np.broadcast_arrays(p, q)
        frame = _tangent_basis(self._normal(p))  # (..., 3, 2)
        coef = np.einsum("...ai,...a->...i", frame, q - p)
        residual = self.exp(p, np.einsum("...ai,...i->...a", frame, coef)) - q
        err = np.linalg.norm(residual, axis=-1)
        fd = 1e-7
        for iteration in range(SHOOTING_MAX_ITER):
            if np.all(err < SHOOTING_TOL):
                break
            jac = np.zeros(p.shape[:-1] + (3, 2))
            for i in range(2):
                bumped = coef.copy()
                bumped[..., i] += fd
                shifted = self.exp(p, np.einsum("...ai,...i->...a", frame, bumped)) - q
                jac[..., :, i] = (shifted - residual) / fd
            jtj = np.einsum("...ai,...aj->...ij", jac, jac)
            jtr = np.einsum("...ai,...a->...i", jac, residual)
            step = -np.linalg.solve(jtj, jtr[..., None])[..., 0]
            # damping: halve per point until the residual decreases
            scale = np.ones(err.shape)
            new_coef, new_res, new_err = coef, residual, err
            for _ in range(10):
                trial = coef + scale[..., None] * step
                trial_res = self.exp(p, np.einsum("...ai,...i->...a", frame, trial)) - q
                trial_err = np.linalg.norm(trial_res, axis=-1)
                better = trial_err < err
                new_coef = np.where(better[..., None], trial, new_coef)
                new_res = np.where(better[..., None], trial_res, new_res)
                new_err = np.where(better, trial_err, new_err)
                if np.all(better | (err < SHOOTING_TOL)):
                    break
                scale = np.where(better, scale, scale / 2.0)
            coef, residual, err = new_coef, new_res, new_err
        else:
            if np.any(err >= SHOOTING_TOL):
                worst = float(np.max(err))
                raise CutLocusError(f"cut-locus: geodesic shooting did not converge (residual {worst:.2e})")
        v = np.einsum("...ai,...i->...a", frame, coef)
        if np.any(np.linalg.norm(v, axis=-1) >= self.injectivity_radius - CUT_TOL):
            raise CutLocusError("cut-locus: target beyond the injectivity radius bound")
        return v


def _tangent_basis(nrm: np.ndarray) -> np.ndarray:
    """Orthonormal tangent pair for unit normals in R^3, shape (..., 3, 2)."""
    axis_idx = np.argmin(np.abs(nrm), axis=-1)
    helper = np.eye(3)[axis_idx]
    e1 = _unit(np.cross(nrm, helper))
    e2 = np.cross(nrm, e1)
    return np.stack([e1, e2], axis=-1)


CATALOG = {
    "euclidean": (Euclidean, {"d": int}),
    "circle": (Circle, {"r": float}),
    "sphere": (Sphere, {"d": int, "r": float}),
    "clifford": (CliffordTorus, {}),
    "clifford_torus": (CliffordTorus, {}),
    "ellipsoid": (Ellipsoid, {"a": float, "b": float, "c": float}),
}


def parse_manifold_spec(spec: str) -> Tuple[str, Dict[str, float]]:
    """'sphere:d=2,r=1' -> ('sphere', {'d': 2, 'r': 1.0})"""
    name, _, body = spec.strip().partition(":")
    name = name.strip().lower()
    if name not in CATALOG:
        raise GeometryError(f"unknown manifold '{name}' (known: {', '.join(sorted(CATALOG))})")
    _, types = CATALOG[name]
    params: Dict[str, float] = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in types:
            raise GeometryError(f"bad parameter '{item}' for manifold '{name}'")
        try:
            params[key] = types[key](float(value)) if types[key] is int else float(value)
        except ValueError as e:
            raise GeometryError(f"bad value in '{item}': {e}")
    return name, params


def make_manifold(spec: str) -> EmbeddedManifold:
    """
    Build a catalog manifold from a spec string.

    Args:
        spec: e.g. "euclidean:d=2", "circle:r=1", "sphere:d=2,r=1", "clifford",
            "ellipsoid:a=1,b=1,c=1.2"

    Returns:
        Wired EmbeddedManifold
    """
    name, params = parse_manifold_spec(spec)
    cls, _ = CATALOG[name]
    manifold = cls(**params)
    logger.info(f"✅ Manifold ready: {manifold.spec_string()} (d={manifold.chart_dim}, N={manifold.ambient_dim})")
    return manifold
