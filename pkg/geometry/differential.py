# geometry/differential.py
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from geometry.finite_difference import first_derivative, second_derivative, third_derivative
from geometry.manifolds import EmbeddedManifold, GeometryError

logger = logging.getLogger(__name__)

MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class CurvatureData:
    """Riemann tensor R_ijkl = <R(∂_k, ∂_l)∂_j, ∂_i>, Ricci and scalar curvature."""
    riemann: np.ndarray  # (d, d, d, d)
    ricci: np.ndarray  # (d, d)
    scalar: float


@dataclass(frozen=True)
class ExtrinsicData:
    tangent_projection: np.ndarray  # (N, N)
    second_fundamental_form: np.ndarray  # (N, d, d), normal-valued
    mean_curvature: np.ndarray  # (N,)
    mean_curvature_sq: float
    b_dot_h: np.ndarray  # (d, d) = <B_ij, H>


def embedding_derivatives(M: EmbeddedManifold, x: np.ndarray, method: str = "closed") -> Tuple[np.ndarray, ...]:
    """
    ∂F, ∂²F, ∂³F at a chart point.

    Args:
        M: manifold
        x: chart point (d,)
        method: "closed" uses the manifold's providers, "fd" forces finite differences

    Returns:
        (F1 (N, d), F2 (N, d, d), F3 (N, d, d, d))
    """
    x = np.asarray(x, dtype=float)
    if method == "fd":
        f1 = first_derivative(M.embed, x)
        f2 = second_derivative(M.embed, x)
        f3 = third_derivative(M.embed, x)
    elif method == "closed":
        f1, f2, f3 = M.jacobian(x), M.hessian(x), M.third_derivative(x)
    else:
        raise ValueError(f"unknown derivative method '{method}'")
    if not (np.all(np.isfinite(f1)) and np.all(np.isfinite(f2)) and np.all(np.isfinite(f3))):
        raise GeometryError(f"non-finite embedding derivatives at {x}")
    return f1, f2, f3


def metric(M: EmbeddedManifold, x: np.ndarray, method: str = "closed") -> np.ndarray:
    """Pullback metric g_ij = <∂_iF, ∂_jF>; raises on a singular Jacobian."""
    f1 = M.jacobian(np.asarray(x, dtype=float)) if method == "closed" else first_derivative(M.embed, x)
    g = f1.T @ f1
    return _check_metric(g, x)


def _check_metric(g: np.ndarray, x) -> np.ndarray:
    g = 0.5 * (g + g.T)
    if np.min(np.linalg.eigvalsh(g)) <= MIN_EIGENVALUE:
        raise GeometryError(f"singular Jacobian at chart point {np.asarray(x).tolist()}")
    return g


def christoffel(M: EmbeddedManifold, x: np.ndarray, method: str = "closed") -> np.ndarray:
    """Γ^k_ij = g^{kl} <∂_ijF, ∂_lF>, indexed [k, i, j]."""
    f1, f2, _ = embedding_derivatives(M, x, method)
    ginv = np.linalg.inv(_check_metric(f1.T @ f1, x))
    return np.einsum("kl,aij,al->kij", ginv, f2, f1)


def curvature(M: EmbeddedManifold, x: np.ndarray, method: str = "closed") -> CurvatureData:
    """
    Riemann, Ricci and scalar curvature from Christoffel symbols and their derivatives.

    R^ρ_{σμν} = ∂_μΓ^ρ_{νσ} - ∂_νΓ^ρ_{μσ} + Γ^ρ_{μλ}Γ^λ_{νσ} - Γ^ρ_{νλ}Γ^λ_{μσ},
    R_ijkl = g_{iρ} R^ρ_{jkl}. The unit sphere gives R_ijkl = g_ik g_jl - g_il g_jk.
    """
    f1, f2, f3 = embedding_derivatives(M, x, method)
    g = _check_metric(f1.T @ f1, x)
    ginv = np.linalg.inv(g)

    lowered = np.einsum("aij,al->ijl", f2, f1)  # <F_ij, F_l>
    gamma = np.einsum("kl,ijl->kij", ginv, lowered)

    dg = np.einsum("xam,xb->abm", f2, f1) + np.einsum("xa,xbm->abm", f1, f2)
    dginv = -np.einsum("ka,abm,bl->klm", ginv, dg, ginv)
    dlowered = np.einsum("xijm,xl->ijlm", f3, f1) + np.einsum("xij,xlm->ijlm", f2, f2)
    dgamma = np.einsum("klm,ijl->kijm", dginv, lowered) + np.einsum("kl,ijlm->kijm", ginv, dlowered)

    rup = (
        np.einsum("rnsm->rsmn", dgamma)
        - np.einsum("rmsn->rsmn", dgamma)
        + np.einsum("rml,lns->rsmn", gamma, gamma)
        - np.einsum("rnl,lms->rsmn", gamma, gamma)
    )
    riemann = np.einsum("ir,rjkl->ijkl", g, rup)
    ricci = np.einsum("ik,ijkl->jl", ginv, riemann)
    ricci = 0.5 * (ricci + ricci.T)
    scalar = float(np.einsum("jl,jl->", ginv, ricci))
    if not np.isfinite(scalar):
        raise GeometryError(f"finite-difference breakdown at {np.asarray(x).tolist()}")
    return CurvatureData(riemann=riemann, ricci=ricci, scalar=scalar)


def gauss_curvature_tensor(M: EmbeddedManifold, x: np.ndarray, method: str = "closed") -> np.ndarray:
    """Riemann tensor from the Gauss equation R_ijkl = <B_ki, B_lj> - <B_kj, B_li>."""
    ext = extrinsic(M, x, method)
    b = ext.second_fundamental_form
    return np.einsum("aki,alj->ijkl", b, b) - np.einsum("akj,ali->ijkl", b, b)


def extrinsic(M: EmbeddedManifold, x: np.ndarray, method: str = "closed") -> ExtrinsicData:
    """
    Tangent projection, second fundamental form B_ij = (∂_ijF)^⊥ and mean
    curvature H = d^{-1} g^{ij} B_ij. On the unit sphere H = -ν.
    """
    f1, f2, _ = embedding_derivatives(M, x, method)
    g = _check_metric(f1.T @ f1, x)
    ginv = np.linalg.inv(g)
    proj = f1 @ ginv @ f1.T
    normal = np.eye(M.ambient_dim) - proj
    b = np.einsum("ab,bij->aij", normal, f2)
    h = np.einsum("ij,aij->a", ginv, b) / M.chart_dim
    return ExtrinsicData(
        tangent_projection=proj,
        second_fundamental_form=b,
        mean_curvature=h,
        mean_curvature_sq=float(h @ h),
        b_dot_h=np.einsum("aij,a->ij", b, h),
    )


def laplacian_embedding(M: EmbeddedManifold, x: np.ndarray) -> np.ndarray:
    """
    ΔF via the divergence form (1/√g) ∂_i(√g g^{ij} ∂_jF), evaluated by
    finite differences of the embedding only.
    """
    x = np.asarray(x, dtype=float)

    def flux(pts: np.ndarray) -> np.ndarray:
        out = []
        for pt in pts:
            f1 = first_derivative(M.embed, pt)
            g = f1.T @ f1
            out.append(np.sqrt(np.linalg.det(g)) * f1 @ np.linalg.inv(g))  # (N, d)
        return np.array(out)

    dflux = first_derivative(flux, x, h=1e-3)  # (N, d, d): ∂_k of column i
    div = np.einsum("aii->a", dflux)
    f1 = first_derivative(M.embed, x)
    return div / np.sqrt(np.linalg.det(f1.T @ f1))


def exp_map(M: EmbeddedManifold, p: np.ndarray, v: np.ndarray) -> np.ndarray:
    return M.exp(p, v)


def log_map(M: EmbeddedManifold, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return M.log(p, q)


def distance(M: EmbeddedManifold, p: np.ndarray, q: np.ndarray):
    return M.distance(p, q)
