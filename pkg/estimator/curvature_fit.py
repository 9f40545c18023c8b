# estimator/curvature_fit.py
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from algebra.truncated_tensor import contract_24, level_cap
from config.constants import DEFAULT_STEPS, FIT_ORDERS
from estimator.expected_signature import EstimatorError, SignatureEstimate, level_offsets, expected_signature
from geometry.expansion import solve_invariants
from geometry.manifolds import EmbeddedManifold
from geometry.normal_chart import NormalChart
from sim.heat_kernel import HeatKernelModel
from utils.run_tracker import RunTracker

logger = logging.getLogger(__name__)

MIN_GRID_POINTS = 4
MAX_T_FRACTION = 0.1  # t <= 0.1 rho_M^2


@dataclass
class CurvatureFit:
    """
    Least-squares fit ψ₄(t) ≈ Θ̂ t² + Ξ̂ t³ (+ t⁴ nuisance) of loop expected signatures.

    Level-4 tensors are stored shaped (N, N, N, N); `solver` maps the stacked
    per-t level-4 means (T, N⁴) to the coefficients and is reused for the
    delete-one-block jackknife.
    """
    manifold: str
    x: np.ndarray
    frame: np.ndarray  # (N, d) orthonormal tangent frame at x
    t_grid: np.ndarray
    fit_order: int
    samples_per_t: int
    theta_hat: np.ndarray
    xi_hat: np.ndarray
    theta_stderr: np.ndarray
    xi_stderr: np.ndarray
    coef_cov: np.ndarray  # (N⁴, p, p)
    chi2_per_dof: float
    estimates: List[SignatureEstimate] = field(default_factory=list)
    solver: Optional[np.ndarray] = None  # (N⁴, p, T)
    alternative: Dict = field(default_factory=dict)
    recovered: Dict = field(default_factory=dict)

    @property
    def ambient_dim(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    # contracted and split forms

    def contracted_theta(self) -> np.ndarray:
        return contract_24(self.theta_hat)

    def contracted_xi(self) -> np.ndarray:
        return contract_24(self.xi_hat)

    def xi_split(self, xi_hat: Optional[np.ndarray] = None):
        """(Ξ^T, Ξ^⊥) restricted to T×T in frame components (d, d)."""
        return split_traces(self.xi_hat if xi_hat is None else xi_hat, self.frame)

    def jackknife(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        """
        Delete-one-block jackknife of func(Θ̂, Ξ̂) across the whole t-grid.

        Block g is removed from every grid point at once; the per-entry
        weights stay fixed.
        """
        value = np.asarray(func(self.theta_hat, self.xi_hat), dtype=float)
        if self.solver is None or not self.estimates:
            return value, np.full_like(value, np.nan)
        n = self.ambient_dim
        lo, hi = level_offsets(n, 4)[4], level_offsets(n, 4)[5]
        n_blocks = min(len(e.blocks) for e in self.estimates)
        if n_blocks < 2:
            return value, np.full_like(value, np.nan)
        totals = [sum(b.signature.total[lo:hi] for b in e.blocks) for e in self.estimates]
        counts = [sum(b.signature.count for b in e.blocks) for e in self.estimates]
        shape = (n,) * 4
        samples = []
        for g in range(n_blocks):
            rows = []
            for e, total, count in zip(self.estimates, totals, counts):
                b = e.blocks[g].signature
                rows.append((total - b.total[lo:hi]) / max(count - b.count, 1))
            coef = np.einsum("ept,te->ep", self.solver, np.stack(rows))
            samples.append(np.asarray(func(coef[:, 0].reshape(shape), coef[:, 1].reshape(shape)), dtype=float))
        samples = np.stack(samples)
        spread = samples - samples.mean(axis=0)
        return value, np.sqrt((n_blocks - 1) / n_blocks * np.sum(spread ** 2, axis=0))


def split_traces(xi_hat: np.ndarray, frame: np.ndarray):
    """
    Tangential and normal (2,4)-traces of a level-4 tensor, restricted to T×T.

    Args:
        xi_hat: (N, N, N, N)
        frame: (N, d) orthonormal tangent frame

    Returns:
        (Ξ^T, Ξ^⊥) as (d, d) arrays
    """
    proj_t = frame @ frame.T
    proj_n = np.eye(frame.shape[0]) - proj_t
    xi_t = np.einsum("uawb,ab->uw", xi_hat, proj_t)
    xi_n = np.einsum("uawb,ab->uw", xi_hat, proj_n)
    return frame.T @ xi_t @ frame, frame.T @ xi_n @ frame


def recovered_vector(xi_hat: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """[S, |H|², Ric (d²), <B,H> (d²)] recovered from a Ξ̂ tensor."""
    d = frame.shape[1]
    xi_t, xi_n = split_traces(xi_hat, frame)
    sol = solve_invariants(d, xi_t, xi_n)
    return np.concatenate([[sol["S"], sol["H2"]], sol["Ric"].ravel(), sol["BH"].ravel()])


def _powers(fit_order: int) -> np.ndarray:
    return np.array([p for p in FIT_ORDERS if p <= fit_order])


def weighted_fit(t_grid: np.ndarray, values: np.ndarray, stderr: np.ndarray, fit_order: int):
    """
    Per-entry inverse-variance least squares of values(t) on {t², t³(, t⁴)}.

    Args:
        t_grid: (T,)
        values: (T, E) per-t means
        stderr: (T, E) per-t standard errors
        fit_order: highest power (3 or 4)

    Returns:
        (coefficients (E, p), covariances (E, p, p), solver (E, p, T), chi² per dof)
    """
    # columns in units of the largest t
    powers = _powers(fit_order)
    tau = float(np.max(t_grid))
    A = (t_grid[:, None] / tau) ** powers[None, :]
    unit = tau ** -powers.astype(float)
    T, p = A.shape
    if T < p or np.linalg.matrix_rank(A) < p:
        raise EstimatorError(f"rank-deficient design: {T} grid points for {p} coefficients")
    scale = np.max(np.abs(values), axis=0, keepdims=True) + 1.0
    sigma = np.maximum(np.nan_to_num(stderr, nan=0.0), 1e-15 * scale)
    w = 1.0 / sigma ** 2  # (T, E)
    normal = np.einsum("tp,te,tq->epq", A, w, A)
    cov = np.linalg.inv(normal)
    solver = np.einsum("epq,tq,te->ept", cov, A, w)
    coef = np.einsum("ept,te->ep", solver, values)
    resid = values - np.einsum("ep,tp->te", coef, A)
    coef = coef * unit
    cov = cov * np.outer(unit, unit)
    solver = solver * unit[None, :, None]
    dof = max(T - p, 1)
    chi2 = float(np.mean(np.sum(resid ** 2 * w, axis=0) / dof))
    return coef, cov, solver, chi2


def fit_psi4(
    M: EmbeddedManifold,
    x: np.ndarray,
    t_grid: Sequence[float],
    samples: int,
    seed: int = 0,
    fit_order: int = 4,
    steps: int = DEFAULT_STEPS,
    model: Optional[HeatKernelModel] = None,
    workers: Optional[int] = None,
    tracker: Optional[RunTracker] = None,
) -> CurvatureFit:
    """
    Fit the level-4 loop expected signature over a t-grid.

    Args:
        M: manifold
        x: base point on M (loops x -> x)
        t_grid: at least 4 lifetimes, each <= 0.1 rho_M²
        samples: loops per grid point
        seed: master seed (grid point i uses seed + i)
        fit_order: 3 for {t², t³}, 4 adds the t⁴ nuisance term

    Returns:
        CurvatureFit, with the ½E[S₂⊗S₂] alternative fit and the
        recovered invariants attached
    """
    x = np.asarray(x, dtype=float)
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    n = M.ambient_dim
    if fit_order not in (3, 4):
        raise EstimatorError(f"fit order must be 3 or 4, got {fit_order}")
    if t_grid.size < MIN_GRID_POINTS:
        raise EstimatorError(f"need at least {MIN_GRID_POINTS} grid points, got {t_grid.size}")
    if np.unique(t_grid).size < t_grid.size or np.any(t_grid <= 0):
        raise EstimatorError("t-grid must hold distinct positive times")
    t_max = MAX_T_FRACTION * M.injectivity_radius ** 2
    if np.any(t_grid > t_max):
        raise EstimatorError(f"t-grid exceeds 0.1 rho_M^2 = {t_max:.4g}")
    if level_cap(n) < 4:
        raise EstimatorError("level 4 is not available for this ambient dimension")

    estimates = []
    for i, t in enumerate(t_grid):
        logger.info(f"🔄 Grid point {i + 1}/{t_grid.size}: t={t:g}")
        estimates.append(
            expected_signature(
                M, x, x, t, 4, samples, seed=seed + i, steps=steps, model=model,
                second_moment=True, workers=workers, tracker=tracker,
            )
        )

    values = np.stack([e.mean.levels[4] for e in estimates])
    stderr = np.stack([e.stderr[4] for e in estimates])
    coef, cov, solver, chi2 = weighted_fit(t_grid, values, stderr, fit_order)
    shape = (n,) * 4
    errs = np.sqrt(np.maximum(np.einsum("epp->ep", cov), 0.0))

    alt_values = np.stack([e.half_outer for e in estimates])
    alt_stderr = np.stack([e.half_outer_stderr for e in estimates])
    alt_coef, _, _, _ = weighted_fit(t_grid, alt_values, alt_stderr, fit_order)
    relation_z = []
    for e in estimates:
        diff = e.mean.levels[4] - e.half_outer
        err = np.maximum(np.nan_to_num(e.relation_stderr, nan=np.inf), 1e-300)
        relation_z.append(float(np.max(np.abs(diff) / err)))

    frame = NormalChart(M, M.chart(x)).frame
    fit = CurvatureFit(
        manifold=M.spec_string(),
        x=x,
        frame=frame,
        t_grid=t_grid,
        fit_order=fit_order,
        samples_per_t=samples,
        theta_hat=coef[:, 0].reshape(shape),
        xi_hat=coef[:, 1].reshape(shape),
        theta_stderr=errs[:, 0].reshape(shape),
        xi_stderr=errs[:, 1].reshape(shape),
        coef_cov=cov,
        chi2_per_dof=chi2,
        estimates=estimates,
        solver=solver,
        alternative={
            "theta_hat": alt_coef[:, 0].reshape(shape),
            "xi_hat": alt_coef[:, 1].reshape(shape),
            "relation_max_z": relation_z,
        },
    )
    xi_t, xi_n = fit.xi_split()
    fit.recovered = solve_invariants(M.chart_dim, xi_t, xi_n)
    logger.info(f"✅ ψ₄ fit done on {t_grid.size} grid points (chi²/dof={chi2:.3g})")
    return fit
