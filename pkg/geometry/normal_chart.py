# geometry/normal_chart.py
import logging
from typing import Optional

import numpy as np

from geometry.differential import CurvatureData, ExtrinsicData, curvature, extrinsic
from geometry.finite_difference import first_derivative, second_derivative, third_derivative
from geometry.manifolds import EmbeddedManifold

logger = logging.getLogger(__name__)


class NormalChart:
    """
    Normal chart V(y) = F(exp_p(Σ y^i e_i)) at a base point, with an
    orthonormal tangent frame e built from the coordinate Jacobian.

    Derivatives of V at 0 are finite differences through the manifold's
    exponential map; curvature data is transported from the coordinate
    chart into the frame.
    """

    def __init__(self, M: EmbeddedManifold, x: Optional[np.ndarray] = None):
        self.manifold = M
        self.chart_point = M.base_chart_point() if x is None else np.asarray(x, dtype=float)
        self.base = M.embed(self.chart_point)
        jac = M.jacobian(self.chart_point)
        q, _ = np.linalg.qr(jac)
        self.frame = q[:, : M.chart_dim]  # (N, d)
        # coordinate -> frame change of basis: frame = jac @ change
        self.change = np.linalg.lstsq(jac, self.frame, rcond=None)[0]  # (d, d)

        self._v1 = None
        self._v2 = None
        self._v3 = None
        self._curv: Optional[CurvatureData] = None
        self._ext: Optional[ExtrinsicData] = None

    @property
    def dim(self) -> int:
        return self.manifold.chart_dim

    def V(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        v = np.einsum("ai,...i->...a", self.frame, y)
        base = np.broadcast_to(self.base, v.shape)
        return self.manifold.exp(base, v)

    # ------------------------------------------------------------------
    # derivatives of V at 0
    # ------------------------------------------------------------------

    @property
    def v1(self) -> np.ndarray:
        if self._v1 is None:
            self._v1 = first_derivative(self.V, np.zeros(self.dim))
        return self._v1

    @property
    def v2(self) -> np.ndarray:
        if self._v2 is None:
            self._v2 = second_derivative(self.V, np.zeros(self.dim))
        return self._v2

    @property
    def v3(self) -> np.ndarray:
        if self._v3 is None:
            self._v3 = third_derivative(self.V, np.zeros(self.dim))
        return self._v3

    # ------------------------------------------------------------------
    # invariant data in the orthonormal frame
    # ------------------------------------------------------------------

    @property
    def curvature(self) -> CurvatureData:
        if self._curv is None:
            coord = curvature(self.manifold, self.chart_point)
            c = self.change
            riemann = np.einsum("ai,bj,ck,dl,abcd->ijkl", c, c, c, c, coord.riemann)
            ricci = np.einsum("ai,bj,ab->ij", c, c, coord.ricci)
            self._curv = CurvatureData(riemann=riemann, ricci=ricci, scalar=coord.scalar)
        return self._curv

    @property
    def extrinsic(self) -> ExtrinsicData:
        if self._ext is None:
            coord = extrinsic(self.manifold, self.chart_point)
            c = self.change
            b = np.einsum("xab,ai,bj->xij", coord.second_fundamental_form, c, c)
            self._ext = ExtrinsicData(
                tangent_projection=coord.tangent_projection,
                second_fundamental_form=b,
                mean_curvature=coord.mean_curvature,
                mean_curvature_sq=coord.mean_curvature_sq,
                b_dot_h=np.einsum("xij,x->ij", b, coord.mean_curvature),
            )
        return self._ext

    # ------------------------------------------------------------------
    # Taylor data of the local coefficients
    # ------------------------------------------------------------------

    def metric_at_zero(self) -> np.ndarray:
        return self.v1.T @ self.v1

    def metric_second_derivative(self) -> np.ndarray:
        """∂_kl g_ij(0) from V derivatives, indexed [i, j, k, l]."""
        v1, v2, v3 = self.v1, self.v2, self.v3
        return (
            np.einsum("aikl,aj->ijkl", v3, v1)
            + np.einsum("aik,ajl->ijkl", v2, v2)
            + np.einsum("ail,ajk->ijkl", v2, v2)
            + np.einsum("ai,ajkl->ijkl", v1, v3)
        )

    def metric_second_derivative_theory(self) -> np.ndarray:
        """-(1/3)(R_ikjl + R_iljk), indexed [i, j, k, l]."""
        r = self.curvature.riemann
        return -(np.einsum("ikjl->ijkl", r) + np.einsum("iljk->ijkl", r)) / 3.0

    def christoffel_derivative(self) -> np.ndarray:
        """∂_m Γ^l_jk(0) = <V_jkm, V_l> + <V_jk, V_lm>, indexed [l, j, k, m]."""
        return np.einsum("ajkm,al->ljkm", self.v3, self.v1) + np.einsum("ajk,alm->ljkm", self.v2, self.v2)

    def drift_at_zero(self) -> np.ndarray:
        """b^i(0) = -(1/2) Σ_j Γ^i_jj(0)."""
        gamma0 = np.einsum("ajk,al->ljk", self.v2, self.v1)
        return -0.5 * np.einsum("ljj->l", gamma0)

    def drift_derivative(self) -> np.ndarray:
        """∂_m b^c(0), indexed [c, m]."""
        return -0.5 * np.einsum("ljjm->lm", self.christoffel_derivative())

    def drift_derivative_theory(self) -> np.ndarray:
        """(1/3) Σ_p R_cppm = -(1/3) Ric_cm."""
        return np.einsum("cppm->cm", self.curvature.riemann) / 3.0

    def bridge_drift_derivative_theory(self) -> np.ndarray:
        """∂_m b̄^c(0) = -(1/6) Ric_cm (drift b plus a ∇G₁)."""
        return -self.curvature.ricci / 6.0

    def inverse_metric_second_derivative(self) -> np.ndarray:
        """∂_mn a^{ab}(0) = -∂_mn g_ab(0), indexed [a, b, m, n]."""
        return -self.metric_second_derivative()

    def inverse_metric_second_derivative_theory(self) -> np.ndarray:
        """(1/3)(R_ambn + R_anbm), indexed [a, b, m, n]."""
        r = self.curvature.riemann
        return (np.einsum("ambn->abmn", r) + np.einsum("anbm->abmn", r)) / 3.0

    def g1_hessian(self) -> np.ndarray:
        """∂_ij G₁(0) for G₁ = -(1/4) log det g: -(1/4) Σ_a ∂_ij g_aa(0)."""
        return -0.25 * np.einsum("aaij->ij", self.metric_second_derivative())

    def g1_hessian_theory(self) -> np.ndarray:
        return self.curvature.ricci / 6.0

    def g0_gradient(self, y: np.ndarray) -> np.ndarray:
        """FD gradient of G₀ = -(1/2) d(V(y), p)² at a chart point y; equals -y."""
        M = self.manifold

        def g0(pts):
            q = self.V(pts)
            dist = M.distance(np.broadcast_to(self.base, q.shape), q)
            return -0.5 * np.asarray(dist) ** 2

        return first_derivative(g0, np.asarray(y, dtype=float))
