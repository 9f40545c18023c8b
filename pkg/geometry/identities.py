# geometry/identities.py
import logging
from typing import Dict, Optional

import numpy as np

from geometry.differential import curvature, extrinsic, gauss_curvature_tensor, laplacian_embedding
from geometry.manifolds import EmbeddedManifold
from geometry.normal_chart import NormalChart

logger = logging.getLogger(__name__)


def _max_abs(a) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float))))


def verify_identities(M: EmbeddedManifold, x: Optional[np.ndarray] = None) -> Dict:
    """
    Residuals of the embedding identities at a chart point.

    Covers ΔF = d·H, the normal-chart inner products of F derivatives,
    orthonormality of ∂_iV(0) and normality of ∂_ijV(0), the metric Taylor
    expansion and the Taylor data of the local coefficients a, b, G₀, G₁.
    Nothing raises; the caller decides which residuals to enforce.
    """
    chart = NormalChart(M, x)
    d = M.chart_dim
    v1, v2, v3 = chart.v1, chart.v2, chart.v3
    curv = chart.curvature
    ext = chart.extrinsic
    h2, bh, ric, s = ext.mean_curvature_sq, ext.b_dot_h, curv.ricci, curv.scalar

    lap = laplacian_embedding(M, chart.chart_point)
    coord_ext = extrinsic(M, chart.chart_point)
    coord_curv = curvature(M, chart.chart_point)
    r = coord_curv.riemann

    lap_norm = float(np.einsum("ajj,akk->", v2, v2))
    full_norm = float(np.einsum("ajk,ajk->", v2, v2))
    trace_third = float(np.einsum("aj,ajkk->", v1, v3))
    inner2 = np.einsum("aij,akk->ij", v2, v2)
    inner3 = np.einsum("ai,ajkk->ij", v1, v3)
    inner4 = np.einsum("aik,ajk->ij", v2, v2)

    y0 = np.full(d, 0.1)
    y0[0] = -0.05

    residuals = {
        "laplacian_mean_curvature": _max_abs(lap - d * coord_ext.mean_curvature),
        "lap_norm": abs(lap_norm - d * d * h2),
        "inner_der1_norm": abs(full_norm - (-s + d * d * h2)),
        "inner_der1_trace": abs(trace_third - (2.0 * s / 3.0 - d * d * h2)),
        "inner_der2": _max_abs(inner2 - d * bh),
        "inner_der3": _max_abs(inner3 - (2.0 * ric / 3.0 - d * bh)),
        "inner_der4": _max_abs(inner4 - (-ric + d * bh)),
        "basis_orthonormal": _max_abs(v1.T @ v1 - np.eye(d)),
        "second_derivative_normal": _max_abs(np.einsum("ak,aij->kij", v1, v2)),
        "metric_expansion": _max_abs(chart.metric_second_derivative() - chart.metric_second_derivative_theory()),
        "drift_at_zero": _max_abs(chart.drift_at_zero()),
        "drift_derivative": _max_abs(chart.drift_derivative() - chart.drift_derivative_theory()),
        "inverse_metric_second_derivative": _max_abs(
            chart.inverse_metric_second_derivative() - chart.inverse_metric_second_derivative_theory()
        ),
        "g0_gradient": _max_abs(chart.g0_gradient(y0) + y0),
        "g1_hessian": _max_abs(chart.g1_hessian() - chart.g1_hessian_theory()),
        "gauss_equation": _max_abs(r - gauss_curvature_tensor(M, chart.chart_point)),
        "curvature_symmetries": max(
            _max_abs(r + np.einsum("ijkl->jikl", r)),
            _max_abs(r + np.einsum("ijkl->ijlk", r)),
            _max_abs(r - np.einsum("ijkl->klij", r)),
        ),
        "ricci_trace": abs(float(np.trace(ric)) - s),
    }
    values = {
        "scalar": s,
        "mean_curvature_sq": h2,
        "lap_norm": lap_norm,
        "full_norm": full_norm,
        "trace_third": trace_third,
        "ricci": ric.tolist(),
        "b_dot_h": bh.tolist(),
    }
    worst = max(residuals, key=residuals.get)
    logger.info(f"✅ Identity check on {M.spec_string()}: worst residual {worst}={residuals[worst]:.2e}")
    return {
        "manifold": M.spec_string(),
        "chart_point": chart.chart_point.tolist(),
        "residuals": residuals,
        "values": values,
        "max_residual": residuals[worst],
    }
