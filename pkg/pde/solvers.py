# pde/solvers.py
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from algebra.truncated_tensor import TruncatedTensor, contract_24, exp, mul, segment_extend
from config.constants import PDE_EPS_DEFAULT, PDE_EPS_MAX, PDE_MIN_GRID, TWO_PI, WRAPPED_IMAGES
from sim.heat_kernel import wrapped_gaussian_score

logger = logging.getLogger(__name__)

CFL_SAFETY = 0.9
RK4_STEPS_PER_UNIT = 200
CLOSURE_SEGMENTS = 64  # chords per geodesic in the bridge initial layer
CSV_COLUMNS = ["theta", "level", "entry_index", "value"]


class PDEStabilityError(Exception):
    """Custom exception for time steps outside the explicit scheme's stability region"""
    pass


@dataclass
class TensorField1D:
    """Truncated tensors on a periodic θ grid at one time stamp."""
    theta: np.ndarray
    values: TruncatedTensor  # batch shape (G,)
    t: float
    meta: Dict = field(default_factory=dict)

    @property
    def grid_size(self) -> int:
        return self.theta.shape[0]

    def level(self, k: int, shaped: bool = False) -> np.ndarray:
        return self.values.level(k, shaped=shaped)

    def level0_error(self) -> float:
        return float(np.max(np.abs(self.values.scalar() - 1.0)))

    def at(self, node: int) -> TruncatedTensor:
        return self.values.take(node)

    def to_frame(self) -> pd.DataFrame:
        frames = []
        for k in range(self.values.max_level + 1):
            lv = self.values.level(k)
            width = lv.shape[-1]
            frames.append(pd.DataFrame({
                "theta": np.repeat(self.theta, width),
                "level": k,
                "entry_index": np.tile(np.arange(width), self.grid_size),
                "value": lv.ravel(),
            }))
        return pd.concat(frames, ignore_index=True)[CSV_COLUMNS]

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        logger.info(f"✅ Field at t={self.t:.6g} written to {path}")
        return path


# ----------------------------------------------------------------------
# Euclidean ODE
# ----------------------------------------------------------------------


@dataclass
class EuclideanSolution:
    rk4: TruncatedTensor
    closed: TruncatedTensor
    max_diff: float


def _half_identity(d: int, m: int) -> TruncatedTensor:
    return TruncatedTensor.from_level(2, 0.5 * np.eye(d), d, m)


def solve_euclidean(t: float, d: int, m: int, steps: Optional[int] = None) -> EuclideanSolution:
    """
    Expected signature of Brownian motion in R^d on [0, t].

    Integrates dΨ/dt = (½ Σ E_i⊗E_i) ⊗ Ψ with classical RK4 and returns it
    beside the closed form exp((t/2) Σ E_i⊗E_i).
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    gen = _half_identity(d, m)
    closed = exp(gen * t)
    psi = TruncatedTensor.unit(d, m)
    n = steps or max(1, int(math.ceil(t * RK4_STEPS_PER_UNIT)))
    h = t / n if n else 0.0
    for _ in range(n if t > 0 else 0):
        k1 = mul(gen, psi)
        k2 = mul(gen, psi + k1 * (h / 2))
        k3 = mul(gen, psi + k2 * (h / 2))
        k4 = mul(gen, psi + k3 * h)
        psi = psi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(psi.levels, closed.levels))
    logger.debug(f"✅ Euclidean ODE d={d} m={m} t={t}: RK4 vs closed form {diff:.2e}")
    return EuclideanSolution(rk4=psi, closed=closed, max_diff=diff)


# ----------------------------------------------------------------------
# circle method of lines
# ----------------------------------------------------------------------


def _roll(a: TruncatedTensor, shift: int) -> TruncatedTensor:
    return a.map_levels(lambda lv: np.roll(lv, shift, axis=0))


def _per_node(a: TruncatedTensor, w: np.ndarray) -> TruncatedTensor:
    return a.map_levels(lambda lv: lv * w[:, None])


class CircleOperator:
    """
    Spatial operator of the expected-signature PDE on the unit circle.

    With F(θ) = (cos θ, sin θ) and the unit frame ∂_θ, the right-hand side is
    ½∂²ψ + DF⊗∂ψ + ½(D²F + DF⊗DF)⊗ψ, plus g(∂ψ + DF⊗ψ) for a bridge
    drift g. D is the grid difference operator, so F(y) - F(x) stays an
    exact discrete steady state of level 1.
    """

    def __init__(self, grid: int, m: int):
        if grid < PDE_MIN_GRID:
            raise ValueError(f"grid needs at least {PDE_MIN_GRID} nodes, got {grid}")
        self.grid = grid
        self.m = m
        self.h = TWO_PI / grid
        self.theta = np.arange(grid) * self.h
        self.F = np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)
        dF = (np.roll(self.F, -1, axis=0) - np.roll(self.F, 1, axis=0)) / (2 * self.h)
        d2F = (np.roll(self.F, -1, axis=0) - 2 * self.F + np.roll(self.F, 1, axis=0)) / self.h ** 2
        self.first = TruncatedTensor.from_level1(dF, m)
        ito = TruncatedTensor.from_level(2, np.einsum("ga,gb->gab", dF, dF), 2, m)
        self.zeroth = (TruncatedTensor.from_level1(d2F, m) + ito) * 0.5
        fwd = (np.roll(self.F, -1, axis=0) - self.F) / self.h
        bwd = (self.F - np.roll(self.F, 1, axis=0)) / self.h
        self.first_fwd = TruncatedTensor.from_level1(fwd, m)
        self.first_bwd = TruncatedTensor.from_level1(bwd, m)

    def stable_dt(self, drift: Optional[np.ndarray] = None) -> float:
        bound = self.h ** 2 / 2.0
        if drift is not None:
            bound = min(bound, self.h ** 2 / (1.0 + np.max(np.abs(drift)) * self.h))
        return bound

    def rhs(self, psi: TruncatedTensor, drift: Optional[np.ndarray] = None) -> TruncatedTensor:
        up, down = _roll(psi, -1), _roll(psi, 1)
        d1 = (up - down) * (0.5 / self.h)
        d2 = (up - psi * 2.0 + down) * (1.0 / self.h ** 2)
        out = d2 * 0.5 + mul(self.first, d1) + mul(self.zeroth, psi)
        if drift is None:
            return out
        central = d1 + mul(self.first, psi)
        fwd = (up - psi) * (1.0 / self.h) + mul(self.first_fwd, psi)
        bwd = (psi - down) * (1.0 / self.h) + mul(self.first_bwd, psi)
        # cell Péclet above 1: upwind along the drift
        peclet = np.abs(drift) * self.h > 1.0
        w_c = np.where(peclet, 0.0, drift)
        w_f = np.where(peclet & (drift > 0), drift, 0.0)
        w_b = np.where(peclet & (drift < 0), drift, 0.0)
        return out + _per_node(central, w_c) + _per_node(fwd, w_f) + _per_node(bwd, w_b)


def _heun(op: CircleOperator, psi: TruncatedTensor, dt: float, drift0=None, drift1=None) -> TruncatedTensor:
    k1 = op.rhs(psi, drift0)
    k2 = op.rhs(psi + k1 * dt, drift1)
    return psi + (k1 + k2) * (dt / 2.0)


def _check_dt(dt: Optional[float], bound: float):
    if dt is not None and dt > bound:
        raise PDEStabilityError(f"time step {dt:.3e} exceeds the explicit stability bound {bound:.3e}")


def solve_circle_bm(t: float, grid: int, m: int, dt: Optional[float] = None) -> TensorField1D:
    """
    Expected φ-signature of Brownian motion on the unit circle started at every grid node.

    Args:
        t: lifetime
        grid: number of nodes G (at least 64)
        m: truncation level
        dt: time step; defaults to 0.9 × Δθ²/2

    Raises:
        PDEStabilityError: dt above Δθ²/2
    """
    op = CircleOperator(grid, m)
    bound = op.stable_dt()
    _check_dt(dt, bound)
    n = max(1, int(math.ceil(t / (dt or CFL_SAFETY * bound)))) if t > 0 else 0
    step = t / n if n else 0.0
    psi = TruncatedTensor.unit(2, m, (grid,))
    for _ in range(n):
        psi = _heun(op, psi, step)
    logger.info(f"✅ Circle BM PDE solved: G={grid}, m={m}, t={t}, {n} steps")
    return TensorField1D(op.theta, psi, t, {"problem": "circle_bm", "steps": n, "dt": step})


def _arc_signatures(op: CircleOperator, y_theta: float, m: int) -> TruncatedTensor:
    gap = (y_theta - op.theta + math.pi) % TWO_PI - math.pi
    u = np.linspace(0.0, 1.0, CLOSURE_SEGMENTS + 1)

    def along(g):
        angles = op.theta[:, None] + g[:, None] * u[None, :]
        pts = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        sig = TruncatedTensor.unit(2, m, (op.grid,))
        for k in range(CLOSURE_SEGMENTS):
            sig = segment_extend(sig, pts[:, k + 1] - pts[:, k])
        return sig

    sig = along(gap)
    cut = np.isclose(np.abs(gap), math.pi, atol=1e-12)
    if np.any(cut):
        # both arcs are minimizing at the cut point
        other = along(np.where(cut, -gap, gap))
        sig = _per_node(sig, np.where(cut, 0.5, 1.0)) + _per_node(other, np.where(cut, 0.5, 0.0))
    return sig


def solve_circle_bridge(
    t: float,
    y_theta: float,
    grid: int,
    m: int,
    eps: float = PDE_EPS_DEFAULT,
    dt: Optional[float] = None,
) -> TensorField1D:
    """
    Expected φ-signature of the Brownian bridge x -> y with lifetime t, for every node x.

    The bridge PDE is integrated in the lifetime variable from t·eps up to t
    with the exact wrapped-Gaussian drift ∂_x log p(τ, x, y). The initial
    layer at τ = t·eps is the signature of the minimizing geodesic arc.

    Raises:
        ValueError: eps outside (0, 0.1]
        PDEStabilityError: a requested dt above the stability bound
    """
    if not 0.0 < eps <= PDE_EPS_MAX:
        raise ValueError(f"eps must lie in (0, {PDE_EPS_MAX}], got {eps}")
    if not t > 0:
        raise ValueError(f"lifetime must be positive, got t={t}")
    op = CircleOperator(grid, m)
    _check_dt(dt, op.stable_dt())
    gap = y_theta - op.theta

    def drift(tau):
        return wrapped_gaussian_score(gap, TWO_PI, tau, WRAPPED_IMAGES)

    tau = t * eps
    psi = _arc_signatures(op, y_theta, m)
    steps = 0
    while tau < t - 1e-15:
        g0 = drift(tau)
        bound = op.stable_dt(g0)
        _check_dt(dt, bound)
        step = min(dt or CFL_SAFETY * bound, t - tau)
        psi = _heun(op, psi, step, g0, drift(tau + step))
        tau += step
        steps += 1
    logger.info(f"✅ Circle bridge PDE solved: G={grid}, m={m}, t={t}, eps={eps}, {steps} steps")
    meta = {"problem": "circle_bridge", "steps": steps, "eps": eps, "y_theta": y_theta}
    return TensorField1D(op.theta, psi, t, meta)


# ----------------------------------------------------------------------
# diagnostics
# ----------------------------------------------------------------------


def level1_bm_error(field: TensorField1D) -> float:
    """Max error of level 1 against (e^{-t/2} - 1)(cos θ, sin θ)."""
    exact = (math.exp(-field.t / 2.0) - 1.0) * np.stack([np.cos(field.theta), np.sin(field.theta)], axis=-1)
    return float(np.max(np.abs(field.level(1) - exact)))


def level1_bridge_error(field: TensorField1D) -> float:
    """Max error of level 1 against F(y) - F(x)."""
    y = field.meta["y_theta"]
    exact = np.array([math.cos(y), math.sin(y)]) - np.stack([np.cos(field.theta), np.sin(field.theta)], axis=-1)
    return float(np.max(np.abs(field.level(1) - exact)))


def refinement_ratio(t: float, grid: int, m: int = 1) -> float:
    """Level-1 error at G over the error at 2G; about 4 for a second-order scheme."""
    coarse = level1_bm_error(solve_circle_bm(t, grid, m))
    fine = level1_bm_error(solve_circle_bm(t, 2 * grid, m))
    return coarse / fine if fine > 0 else math.inf


def loop_t2_coefficient(t_grid: Sequence[float], grid: int, eps: float = PDE_EPS_DEFAULT) -> Dict:
    """
    t² coefficient of the tangential part of 𝔠ψ₄ for circle loops.

    Loops start and end at θ = 0; the fit uses t² and t³ terms.
    """
    ts = np.asarray(t_grid, dtype=float)
    tangent = np.array([0.0, 1.0])
    values: List[float] = []
    for t in ts:
        field = solve_circle_bridge(float(t), 0.0, grid, 4, eps)
        c = contract_24(field.at(0).level(4, shaped=True))
        values.append(float(tangent @ c @ tangent))
    design = np.stack([ts ** 2, ts ** 3], axis=-1)
    coef = np.linalg.lstsq(design, np.array(values), rcond=None)[0]
    return {"t_grid": ts.tolist(), "values": values, "t2": float(coef[0]), "t3": float(coef[1])}
