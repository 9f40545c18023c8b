# geometry/expansion.py
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from geometry.manifolds import EmbeddedManifold, GeometryError
from geometry.normal_chart import NormalChart

logger = logging.getLogger(__name__)

ROUTE_TOL = 1e-4
ALGEBRA_TOL = 1e-10


@dataclass
class CurvatureOracle:
    """Per-point geometry record plus the small-time expansion tensors (frame components)."""
    chart_point: np.ndarray
    base: np.ndarray
    frame: np.ndarray  # (N, d) orthonormal tangent frame
    ricci: np.ndarray
    scalar: float
    second_fundamental_form: np.ndarray  # (N, d, d)
    mean_curvature: np.ndarray
    mean_curvature_sq: float
    b_dot_h: np.ndarray
    theta: np.ndarray  # (N, N) Θ(v, w) = (d-1)/24 <π v, π w>
    xi: np.ndarray  # (d, d) Ξ restricted to T×T
    xi_tangential: np.ndarray
    xi_normal: np.ndarray
    xi_tangential_raw: np.ndarray  # intermediate route from raw F derivatives
    xi_normal_raw: np.ndarray
    residuals: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "chart_point": self.chart_point.tolist(),
            "base": self.base.tolist(),
            "scalar": self.scalar,
            "ricci": self.ricci.tolist(),
            "mean_curvature_sq": self.mean_curvature_sq,
            "b_dot_h": self.b_dot_h.tolist(),
            "theta": self.theta.tolist(),
            "xi": self.xi.tolist(),
            "xi_tangential": self.xi_tangential.tolist(),
            "xi_normal": self.xi_normal.tolist(),
            "xi_tangential_raw": self.xi_tangential_raw.tolist(),
            "xi_normal_raw": self.xi_normal_raw.tolist(),
            "residuals": dict(self.residuals),
        }


# ----------------------------------------------------------------------
# invariant formulas (orthonormal frame components, g = identity)
# ----------------------------------------------------------------------


def xi_tangential_invariant(d: int, ricci, scalar, h2, bh) -> np.ndarray:
    g = np.eye(d)
    return (
        (49 * d - 62) / 8640.0 * ricci
        + (49.0 * scalar / 8640.0 - d * d * h2 / 120.0) * g
        - (d - 2) * d / 120.0 * bh
    )


def xi_normal_invariant(d: int, ricci, scalar, h2, bh) -> np.ndarray:
    g = np.eye(d)
    return (9.0 * d * d * h2 - 8.0 * scalar) / 1440.0 * g + 7.0 / 1440.0 * ricci - d / 160.0 * bh


def xi_total_invariant(d: int, ricci, scalar, h2, bh) -> np.ndarray:
    """Ξ|_{T×T} = (S - 18 d²|H|²)/8640 g + (49d - 20)/8640 Ric + (5 - 4d)d/480 <B, H>."""
    g = np.eye(d)
    return (
        (scalar - 18.0 * d * d * h2) / 8640.0 * g
        + (49 * d - 20) / 8640.0 * ricci
        + (5 - 4 * d) * d / 480.0 * bh
    )


def theta_theory(frame: np.ndarray) -> np.ndarray:
    d = frame.shape[1]
    return (d - 1) / 24.0 * frame @ frame.T


def theta_hat_theory(frame: np.ndarray) -> np.ndarray:
    """Uncontracted t² coefficient (1/24)(F_i⊗F_j⊗F_i⊗F_j - F_i⊗F_j⊗F_j⊗F_i), shape (N,)*4."""
    a = np.einsum("ai,bj,ci,dj->abcd", frame, frame, frame, frame)
    b = np.einsum("ai,bj,cj,di->abcd", frame, frame, frame, frame)
    return (a - b) / 24.0


def intermediate_xi(chart: NormalChart) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ξ^T and Ξ^⊥ as ambient 2-tensors from raw normal-chart derivatives
    (curvature enters only through S and Ric).
    """
    v1, v2, v3 = chart.v1, chart.v2, chart.v3
    d = chart.dim
    scalar = chart.curvature.scalar
    ricci = chart.curvature.ricci

    ff = np.einsum("ai,bi->ab", v1, v1)
    inner_i_jkk = np.einsum("ai,ajkk->ij", v1, v3)
    c_ij = (d + 34) / 8640.0 * ricci - (inner_i_jkk + inner_i_jkk.T) / 240.0
    cross = np.einsum("ai,bijj->ab", v1, v3)
    xi_t = (
        (scalar / 8640.0 + np.trace(inner_i_jkk) / 120.0) * ff
        + np.einsum("ij,ai,bj->ab", c_ij, v1, v1)
        + (d - 2) / 1440.0 * np.einsum("aii,bjj->ab", v2, v2)
        + (8 * d - 7) / 1440.0 * np.einsum("aij,bij->ab", v2, v2)
        + (d - 1) / 240.0 * (cross + cross.T)
    )

    lap_norm = np.einsum("ajj,akk->", v2, v2)
    full_norm = np.einsum("ajk,ajk->", v2, v2)
    mix = 7.0 / 1440.0 * np.einsum("aik,ajk->ij", v2, v2) + np.einsum("aij,akk->ij", v2, v2) / 720.0
    xi_n = (lap_norm / 1440.0 + full_norm / 180.0) * ff - np.einsum("ij,ai,bj->ab", mix, v1, v1)
    return xi_t, xi_n


def theoretical_expansion_tensors(
    M: EmbeddedManifold, x: Optional[np.ndarray] = None, strict: bool = False
) -> CurvatureOracle:
    """
    Θ and Ξ theory at a chart point, by the invariant route and by raw derivatives.

    Args:
        M: manifold
        x: chart point (defaults to the manifold's base point)
        strict: raise GeometryError when the two Ξ routes disagree beyond 1e-4

    Returns:
        CurvatureOracle with residuals "xi_t3coef" and "xi_routes"
    """
    chart = NormalChart(M, x)
    d = M.chart_dim
    curv = chart.curvature
    ext = chart.extrinsic
    h2, bh = ext.mean_curvature_sq, ext.b_dot_h

    xi_t = xi_tangential_invariant(d, curv.ricci, curv.scalar, h2, bh)
    xi_n = xi_normal_invariant(d, curv.ricci, curv.scalar, h2, bh)
    xi = xi_t + xi_n
    combined = xi_total_invariant(d, curv.ricci, curv.scalar, h2, bh)

    raw_t, raw_n = intermediate_xi(chart)
    e = chart.frame
    raw_t, raw_n = e.T @ raw_t @ e, e.T @ raw_n @ e

    residuals = {
        "xi_t3coef": float(np.max(np.abs(xi - combined))),
        "xi_routes": float(max(np.max(np.abs(raw_t - xi_t)), np.max(np.abs(raw_n - xi_n)))),
    }
    if residuals["xi_t3coef"] > ALGEBRA_TOL:
        raise GeometryError(f"invariant Ξ split inconsistent: {residuals['xi_t3coef']:.2e}")
    if residuals["xi_routes"] > ROUTE_TOL:
        message = f"Ξ routes disagree by {residuals['xi_routes']:.2e} on {M.spec_string()}"
        if strict:
            raise GeometryError(message)
        logger.warning(f"⚠️ {message}")

    return CurvatureOracle(
        chart_point=chart.chart_point,
        base=chart.base,
        frame=e,
        ricci=curv.ricci,
        scalar=curv.scalar,
        second_fundamental_form=ext.second_fundamental_form,
        mean_curvature=ext.mean_curvature,
        mean_curvature_sq=h2,
        b_dot_h=bh,
        theta=theta_theory(e),
        xi=xi,
        xi_tangential=xi_t,
        xi_normal=xi_n,
        xi_tangential_raw=raw_t,
        xi_normal_raw=raw_n,
        residuals=residuals,
    )


# ----------------------------------------------------------------------
# inverse problems
# ----------------------------------------------------------------------


def solve_invariants(d: int, xi_t: np.ndarray, xi_n: np.ndarray) -> Dict:
    """
    Recover (S, |H|², Ric, <B, H>) from tangential and normal traces of Ξ̂.

    Traces of the two invariant formulas form a 2x2 system in (S, |H|²);
    with those known, the tensor pair (Ric, <B, H>) solves a second 2x2
    system entrywise. Condition numbers of both systems are returned.
    """
    scalar_rows = np.array([
        [(98.0 * d - 62.0) / 8640.0, -d * d * (2.0 * d - 2.0) / 120.0],
        [(7.0 - 8.0 * d) / 1440.0, d * d * (9.0 * d - 9.0) / 1440.0],
    ])
    traces = np.array([np.trace(xi_t), np.trace(xi_n)])
    cond_scalar = float(np.linalg.cond(scalar_rows))
    scalar, h2 = np.linalg.lstsq(scalar_rows, traces, rcond=None)[0]

    g = np.eye(d)
    rest_t = xi_t - (49.0 * scalar / 8640.0 - d * d * h2 / 120.0) * g
    rest_n = xi_n - (9.0 * d * d * h2 - 8.0 * scalar) / 1440.0 * g
    tensor_rows = np.array([
        [(49.0 * d - 62.0) / 8640.0, -(d - 2.0) * d / 120.0],
        [7.0 / 1440.0, -d / 160.0],
    ])
    cond_tensor = float(np.linalg.cond(tensor_rows))
    stacked = np.stack([rest_t.ravel(), rest_n.ravel()])
    sol = np.linalg.lstsq(tensor_rows, stacked, rcond=None)[0]
    return {
        "S": float(scalar),
        "H2": float(h2),
        "Ric": sol[0].reshape(d, d),
        "BH": sol[1].reshape(d, d),
        "cond_scalar": cond_scalar,
        "cond_tensor": cond_tensor,
    }


def recover_tangent_space(theta: np.ndarray, d: int, frame: Optional[np.ndarray] = None) -> Dict:
    """
    Tangent space from a Θ estimate: top-d eigenvectors of its symmetric part.

    Args:
        theta: (N, N) contracted t² coefficient
        d: manifold dimension
        frame: true orthonormal tangent frame for comparison

    Returns:
        basis, eigenvalues and (when frame is given) cosines of principal angles
    """
    sym = 0.5 * (theta + theta.T)
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1]
    basis = vecs[:, order[:d]]
    out = {"basis": basis, "eigenvalues": vals[order]}
    if frame is not None:
        out["principal_cosines"] = np.linalg.svd(frame.T @ basis, compute_uv=False)
    return out
