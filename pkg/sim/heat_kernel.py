# sim/heat_kernel.py
import logging
import math
from typing import Optional

import numpy as np
from scipy.special import eval_gegenbauer

from config.constants import (
    HEAT_MODES,
    HEAT_SERIES_TERMS,
    MODE_EXACT,
    MODE_SMALL_TIME,
    SMALL_TIME_RADIUS_FRACTION,
    WRAPPED_IMAGES,
)
from geometry.catalog import Circle, CliffordTorus, Euclidean, Sphere
from geometry.finite_difference import first_derivative
from geometry.manifolds import EmbeddedManifold, GeometryError
from geometry.normal_chart import NormalChart

logger = logging.getLogger(__name__)

# sphere eigen-series is used only where it keeps double precision
SERIES_MIN_TIME = 1e-3
SERIES_MAX_EXPONENT = 20.0
G1_METHODS = ["auto", "ricci", "numeric", "off"]


class SamplerError(Exception):
    """Custom exception for sampler parameter and model violations"""
    pass


def wrapped_gaussian_score(gap: np.ndarray, period: float, u: float, images: int = WRAPPED_IMAGES) -> np.ndarray:
    """
    ∂/∂x log Σ_k exp(-(gap + kL)² / 2u) for an arc-length gap y - x on a
    circle of circumference L, with k = -images//2 .. images//2.
    """
    gap = np.asarray(gap, dtype=float)
    gap = (gap + period / 2.0) % period - period / 2.0
    ks = np.arange(images) - images // 2
    shifted = gap[..., None] + ks * period
    expo = -shifted ** 2 / (2.0 * u)
    expo = expo - np.max(expo, axis=-1, keepdims=True)
    w = np.exp(expo)
    return np.sum(w * shifted, axis=-1) / (u * np.sum(w, axis=-1))


def sphere_radial_score(theta: np.ndarray, tau: float, d: int, terms: int = HEAT_SERIES_TERMS) -> np.ndarray:
    """
    -∂_θ log p(τ, θ) on the unit sphere S^d from the Gegenbauer eigen-series

        p ∝ Σ_l (2l + d - 1)/(d - 1) C_l^α(cos θ) e^{-l(l+d-1)τ/2},  α = (d - 1)/2

    (Legendre for d = 2). Positive values pull toward the target.
    """
    alpha = 0.5 * (d - 1)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)[..., None]
    ls = np.arange(terms)
    weights = (2.0 * ls + d - 1) / (d - 1) * np.exp(-ls * (ls + d - 1) * tau / 2.0)
    value = np.sum(weights * eval_gegenbauer(ls, alpha, c), axis=-1)
    # dC_l^α/dx = 2α C_{l-1}^{α+1}
    deriv = np.zeros_like(value)
    if terms > 1:
        lm = ls[1:]
        deriv = np.sum(weights[1:] * 2.0 * alpha * eval_gegenbauer(lm - 1, alpha + 1.0, c), axis=-1)
    return np.sin(theta) * deriv / value


def _unit_or_zero(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(norm > 0.0, v / np.where(norm > 0.0, norm, 1.0), 0.0)


def g1_numeric(M: EmbeddedManifold, x: np.ndarray, y: np.ndarray) -> float:
    """
    G₁(x, y) = -½ log det(d exp_y) at exp_y⁻¹(x), by a finite-difference
    Jacobian of exp_y in an orthonormal frame at y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    frame_y = M.tangent_frame(y)
    frame_x = M.tangent_frame(x)
    w0 = frame_y.T @ M.log(y, x)

    def exp_y(w):
        return M.exp(np.broadcast_to(y, w.shape[:-1] + (M.ambient_dim,)), np.einsum("ai,...i->...a", frame_y, w))

    jac = first_derivative(exp_y, w0)  # (N, d)
    det = np.linalg.det(frame_x.T @ jac)
    if det <= 0.0:
        raise GeometryError(f"exp_y is singular at the requested point (det={det:.3e})")
    return -0.5 * math.log(det)


class HeatKernelModel:
    """
    Log-gradient of the heat kernel p(u, x, y) of Δ/2 in the x variable.

    Exact mode uses closed forms (Euclidean Gaussian, wrapped Gaussians on the
    circle and the Clifford torus, the Gegenbauer series on round spheres).
    Small-time mode returns log_x(y)/u + ∇_x G₁(x, y).
    """

    def __init__(self, M: EmbeddedManifold, mode: str = MODE_SMALL_TIME, g1: str = "auto"):
        if mode not in HEAT_MODES:
            raise SamplerError(f"unknown heat kernel mode '{mode}' (known: {', '.join(HEAT_MODES)})")
        if g1 not in G1_METHODS:
            raise SamplerError(f"unknown G1 method '{g1}'")
        if mode == MODE_EXACT and not isinstance(M, (Euclidean, Circle, Sphere, CliffordTorus)):
            raise SamplerError(f"no closed-form heat kernel for {M.spec_string()}")
        self.manifold = M
        self.mode = mode
        self.g1 = g1
        self._ricci_cache = {}

    def __repr__(self) -> str:
        return f"HeatKernelModel({self.manifold.spec_string()}, mode={self.mode}, g1={self.g1})"

    # ------------------------------------------------------------------
    # public API
    # ------------------------------------------------------------------

    def check_small_time(self, x: np.ndarray, y: np.ndarray):
        if self.mode != MODE_SMALL_TIME:
            return
        limit = SMALL_TIME_RADIUS_FRACTION * self.manifold.injectivity_radius
        dist = np.max(np.atleast_1d(self.manifold.distance(x, y)))
        if dist >= limit:
            raise SamplerError(f"small-time drift needs d(x,y) < {limit:.4g}, got {dist:.4g}")

    def grad_log_p(self, u: float, x: np.ndarray, y: np.ndarray, log_xy: Optional[np.ndarray] = None) -> np.ndarray:
        """
        ∇_x log p(u, x, y) as ambient tangent vectors at x.

        Args:
            u: remaining time, > 0
            x: current point(s) (..., N)
            y: target point (N,) or (..., N)
            log_xy: precomputed log_x(y), reused by the sampler

        Returns:
            Tangent vectors (..., N)
        """
        if u <= 0.0:
            raise SamplerError(f"remaining time must be positive, got {u}")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.mode == MODE_EXACT:
            return self._exact(u, x, y)
        if log_xy is None:
            log_xy = self.manifold.log(x, y)
        return log_xy / u + self.grad_g1(x, y, log_xy)

    def grad_g1(self, x: np.ndarray, y: np.ndarray, log_xy: np.ndarray) -> np.ndarray:
        """∇_x G₁(x, y); zero at x = y and on intrinsically flat manifolds."""
        M = self.manifold
        if self.g1 == "off" or M.intrinsically_flat or isinstance(M, Circle):
            return np.zeros_like(log_xy)
        if isinstance(M, Sphere) and self.g1 == "auto":
            return _sphere_grad_g1(log_xy, M.chart_dim, M.radius)
        if self.g1 == "numeric":
            return self._numeric_grad_g1(x, y)
        # leading Taylor term: ∇_x G₁ = -Ric(log_x y)/6 + O(d²)
        ricci = self._ambient_ricci(y)
        tangent = np.einsum("ab,...b->...a", ricci, log_xy) / -6.0
        proj = M.tangent_projection(x)
        return np.einsum("...ab,...b->...a", proj, tangent)

    # ------------------------------------------------------------------
    # internals
    # ------------------------------------------------------------------

    def _exact(self, u: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        M = self.manifold
        if isinstance(M, Euclidean):
            return (y - x) / u
        if isinstance(M, Circle):
            r = M.radius
            theta_x = np.arctan2(x[..., 1], x[..., 0])
            theta_y = np.arctan2(y[..., 1], y[..., 0])
            score = wrapped_gaussian_score(r * (theta_y - theta_x), 2.0 * math.pi * r, u)
            tangent = np.stack([-np.sin(theta_x), np.cos(theta_x)], axis=-1)
            return score[..., None] * tangent
        if isinstance(M, CliffordTorus):
            cx, cy = M.chart(x), M.chart(y)
            score = wrapped_gaussian_score(cy - cx, M.period, u)
            return np.einsum("...ai,...i->...a", M._frame(cx), score)
        return self._sphere_exact(u, x, y)

    def _sphere_exact(self, u: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        M = self.manifold
        d, r = M.chart_dim, M.radius
        tau = u / r ** 2
        log_xy, _ = M.log_safe(x, y)
        dist = np.linalg.norm(log_xy, axis=-1)
        theta = dist / r
        direction = _unit_or_zero(log_xy)
        use_series = (tau >= SERIES_MIN_TIME) & (theta ** 2 / (2.0 * tau) < SERIES_MAX_EXPONENT)
        score = np.zeros_like(theta)
        if np.any(use_series):
            score = np.where(use_series, sphere_radial_score(np.where(use_series, theta, 0.0), tau, d) / r, 0.0)
        # far tail / very small time: the series loses precision, use the G₁-corrected asymptotics
        asymptotic = log_xy / u + _sphere_grad_g1(log_xy, d, r)
        return np.where(use_series[..., None], score[..., None] * direction, asymptotic)

    def _ambient_ricci(self, y: np.ndarray) -> np.ndarray:
        key = tuple(np.round(np.asarray(y, dtype=float).ravel(), 12))
        if key not in self._ricci_cache:
            M = self.manifold
            chart = NormalChart(M, M.chart(np.asarray(y, dtype=float)))
            e = chart.frame
            self._ricci_cache[key] = e @ chart.curvature.ricci @ e.T
        return self._ricci_cache[key]

    def _numeric_grad_g1(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        M = self.manifold
        flat_x = x.reshape(-1, M.ambient_dim)
        flat_y = np.broadcast_to(y, x.shape).reshape(-1, M.ambient_dim)
        out = np.zeros_like(flat_x)
        for i in range(flat_x.shape[0]):
            z0 = M.chart(flat_x[i])
            target = flat_y[i]
            if np.allclose(flat_x[i], target, atol=1e-12):
                continue

            def g1_of_chart(zs, target=target):
                return np.array([g1_numeric(M, M.embed(z), target) for z in zs])

            partial = first_derivative(g1_of_chart, z0)
            jac = M.jacobian(z0)
            out[i] = jac @ np.linalg.solve(jac.T @ jac, partial)
        return out.reshape(x.shape)


def _sphere_grad_g1(log_xy: np.ndarray, d: int, radius: float) -> np.ndarray:
    """∇_x G₁ for G₁ = -½(d-1) log(R sin(r/R) / r), r = d(x, y)."""
    r = np.linalg.norm(log_xy, axis=-1)
    safe = np.where(r > 1e-6, r, 1.0)
    exact = (np.cos(safe / radius) / (radius * np.sin(safe / radius)) - 1.0 / safe) / safe
    series = -1.0 / (3.0 * radius ** 2) - r ** 2 / (45.0 * radius ** 4)
    factor = np.where(r > 1e-6, exact, series)
    return 0.5 * (d - 1) * factor[..., None] * log_xy
