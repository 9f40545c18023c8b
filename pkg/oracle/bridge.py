# oracle/bridge.py
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from estimator.curvature_fit import split_traces
from geometry.expansion import theoretical_expansion_tensors, theta_hat_theory
from geometry.manifolds import EmbeddedManifold
from geometry.normal_chart import NormalChart
from oracle.labels import OracleError, TensorLabel, parse_label
from oracle.tables import CoefficientTable, load_golden

logger = logging.getLogger(__name__)

AMBIENT = "ABCD"  # einsum letters of the four output slots
BRIDGE_TOL = 1e-3


class ChartData:
    """Numeric values of the abstract oracle symbols at the base of a normal chart."""

    def __init__(self, chart: NormalChart):
        self.chart = chart
        self.v1 = chart.v1  # φ_c = ∂_c V
        self.v2 = chart.v2  # ∂_m φ_c
        self.v3 = chart.v3  # ∂²_mn φ_c
        self.db = chart.bridge_drift_derivative_theory()  # [c, m]
        self.dda = chart.inverse_metric_second_derivative_theory()  # [a, b, m, n]

    @property
    def ambient_dim(self) -> int:
        return self.v1.shape[0]


def _operands(label: TensorLabel, data: ChartData) -> Tuple[List[str], List[np.ndarray]]:
    subscripts, arrays = [], []
    for n, slot in enumerate(label.slots):
        if slot.is_varphi:
            raise OracleError(f"substitute varphi before evaluating {label}")
        letters = AMBIENT[n] + slot.index + "".join(slot.derivs)
        if len(slot.derivs) > 2:
            raise OracleError(f"third derivatives of φ are not available: {label}")
        subscripts.append(letters)
        arrays.append((data.v1, data.v2, data.v3)[len(slot.derivs)])
    for factor in label.factors:
        subscripts.append("".join(factor.upper) + "".join(factor.lower))
        arrays.append(data.db if factor.kind == "db" else data.dda)
    return subscripts, arrays


def label_tensor(label: TensorLabel, data: ChartData) -> np.ndarray:
    """
    Fully contracted label as an (N, N, N, N) ambient tensor.

    Every index letter appears exactly twice, so einsum sums it away and
    only the four slot axes remain.
    """
    subscripts, arrays = _operands(label, data)
    return np.einsum(",".join(subscripts) + "->" + AMBIENT, *arrays)


def evaluate_table(table: CoefficientTable, chart: NormalChart) -> np.ndarray:
    """
    Σ value × label over the substituted contracted form of a table.

    Args:
        table: raw, contracted or substituted coefficient table
        chart: normal chart supplying V derivatives and curvature

    Returns:
        (N, N, N, N) float array
    """
    data = ChartData(chart)
    n = data.ambient_dim
    out = np.zeros((n,) * 4)
    for (label, _), value in table.substituted().items():
        out += float(value) * label_tensor(parse_label(label), data)
    return out


def bridge_check(
    M: EmbeddedManifold,
    x: Optional[np.ndarray] = None,
    theta: Optional[CoefficientTable] = None,
    xi: Optional[CoefficientTable] = None,
) -> Dict:
    """
    Compare oracle totals evaluated on a normal chart with the geometric theory.

    Θ̂ is compared entrywise against the level-4 theory tensor; Ξ̂ through
    its tangential and normal (2,4)-traces restricted to T×T. Tables
    default to the shipped totals.
    """
    chart = NormalChart(M, x)
    if theta is None:
        theta = load_golden("leading_t2").totals["theta"]
    if xi is None:
        xi = load_golden("totals").totals["xi"]

    theory = theoretical_expansion_tensors(M, chart.chart_point)
    frame = chart.frame

    theta_num = evaluate_table(theta, chart)
    xi_num = evaluate_table(xi, chart)
    xi_t, xi_n = split_traces(xi_num, frame)
    sym = lambda a: 0.5 * (a + a.T)  # noqa: E731

    residuals = {
        "theta_hat": float(np.max(np.abs(theta_num - theta_hat_theory(frame)))),
        "xi_tangential": float(np.max(np.abs(sym(xi_t) - theory.xi_tangential))),
        "xi_normal": float(np.max(np.abs(sym(xi_n) - theory.xi_normal))),
    }
    bad = {k: v for k, v in residuals.items() if v > BRIDGE_TOL}
    if bad:
        logger.warning(f"⚠️ Oracle totals disagree with geometry on {M.spec_string()}: {bad}")
    else:
        logger.info(f"✅ Oracle totals match geometry on {M.spec_string()}")
    return {
        "manifold": M.spec_string(),
        "residuals": residuals,
        "xi_tangential": sym(xi_t).tolist(),
        "xi_normal": sym(xi_n).tolist(),
        "xi_tangential_theory": theory.xi_tangential.tolist(),
        "xi_normal_theory": theory.xi_normal.tolist(),
        "ok": not bad,
    }
