# estimator/curvature_report.py
import logging
from typing import Optional

import numpy as np

from algebra.truncated_tensor import contract_24
from config.constants import CONDITION_LIMIT
from estimator.curvature_fit import CurvatureFit, recovered_vector, split_traces
from estimator.expected_signature import IllConditionedError
from geometry.expansion import recover_tangent_space, theoretical_expansion_tensors, theta_hat_theory
from geometry.manifolds import EmbeddedManifold
from schemas.reports import CurvatureReport, RecoveredValue, TensorComparison

logger = logging.getLogger(__name__)


def relative_error(est: np.ndarray, theory: np.ndarray) -> float:
    """Frobenius relative error; absolute when the theory vanishes."""
    diff = float(np.linalg.norm(np.asarray(est) - np.asarray(theory)))
    scale = float(np.linalg.norm(theory))
    return diff / scale if scale > 1e-14 else diff


def _compare(est: np.ndarray, theory: np.ndarray, stderr: Optional[np.ndarray]) -> TensorComparison:
    return TensorComparison(
        est=np.asarray(est).tolist(),
        theory=np.asarray(theory).tolist(),
        stderr=None if stderr is None else np.nan_to_num(np.asarray(stderr), nan=-1.0).tolist(),
        rel_err=relative_error(est, theory),
    )


def _swap(tensor: np.ndarray, slots: str) -> np.ndarray:
    return np.einsum(f"abcd->{slots}", tensor)


def curvature_report(
    fit: CurvatureFit,
    M: EmbeddedManifold,
    x: np.ndarray,
    theta_level4_theory: Optional[np.ndarray] = None,
) -> CurvatureReport:
    """
    Recovered geometry from a ψ₄ fit beside the geometry oracle at x.

    Ξ̂ is traced over tangent and normal directions, the traced invariant
    formulas are solved for (S, |H|²) and then the tensor system for
    (Ric, <B, H>). Error bars come from the delete-one-block jackknife of
    the whole fit.

    Args:
        fit: output of fit_psi4
        M: manifold
        x: base point of the fit
        theta_level4_theory: uncontracted Θ̂ theory (defaults to the
            closed form built from the tangent frame)

    Returns:
        CurvatureReport; raises IllConditionedError when either recovery
        system has condition number above 1e6
    """
    x = np.asarray(x, dtype=float)
    d = M.chart_dim
    oracle = theoretical_expansion_tensors(M, M.chart(x))
    frame = fit.frame

    # STEP 1: conditioning of the recovery systems
    conds = {"scalar": fit.recovered["cond_scalar"], "tensor": fit.recovered["cond_tensor"]}
    if max(conds.values()) > CONDITION_LIMIT or not np.all(np.isfinite(list(conds.values()))):
        logger.error(f"❌ Recovery system ill-conditioned on {M.spec_string()}: {conds}")
        raise IllConditionedError(
            f"recovery linear system ill-conditioned for d={d}: "
            f"cond(scalar)={conds['scalar']:.3e}, cond(tensor)={conds['tensor']:.3e} (limit {CONDITION_LIMIT:.0e})"
        )

    # STEP 2: Θ̂, contracted and uncontracted
    def theta_tangent(theta, xi):
        return frame.T @ contract_24(theta) @ frame

    theta_est, theta_err = fit.jackknife(theta_tangent)
    theta_th = (d - 1) / 24.0 * np.eye(d)
    full_theory = theta_hat_theory(frame) if theta_level4_theory is None else theta_level4_theory
    floor = np.maximum(fit.theta_stderr, 1e-15)
    theta_full_z = float(np.max(np.abs(fit.theta_hat - full_theory) / floor))

    def antisymmetry(theta, xi):
        return np.stack([theta + _swap(theta, "bacd"), theta + _swap(theta, "abdc")])

    anti, anti_err = fit.jackknife(antisymmetry)
    anti_z = float(np.nanmax(np.abs(anti) / np.maximum(np.nan_to_num(anti_err, nan=np.inf), 1e-15)))

    # STEP 3: Ξ̂ and its tangential / normal splits
    def xi_parts(theta, xi):
        xi_t, xi_n = split_traces(xi, frame)
        return np.stack([xi_t + xi_n, xi_t, xi_n])

    parts, parts_err = fit.jackknife(xi_parts)

    # STEP 4: invariants
    recovered, recovered_err = fit.jackknife(lambda theta, xi: recovered_vector(xi, frame))
    ric_slice = slice(2, 2 + d * d)
    bh_slice = slice(2 + d * d, 2 + 2 * d * d)
    truth = {
        "S": oracle.scalar,
        "H2": oracle.mean_curvature_sq,
        "Ric": oracle.ricci,
        "BH": oracle.b_dot_h,
    }
    estimates = {
        "S": (recovered[0], recovered_err[0]),
        "H2": (recovered[1], recovered_err[1]),
        "Ric": (recovered[ric_slice].reshape(d, d), recovered_err[ric_slice].reshape(d, d)),
        "BH": (recovered[bh_slice].reshape(d, d), recovered_err[bh_slice].reshape(d, d)),
    }
    recovered_values = {}
    for key, (est, err) in estimates.items():
        recovered_values[key] = RecoveredValue(
            est=np.asarray(est).tolist(),
            oracle=np.asarray(truth[key]).tolist(),
            stderr=np.nan_to_num(np.asarray(err), nan=-1.0).tolist(),
            rel_err=relative_error(est, truth[key]),
        )

    # STEP 5: tangent space and the second-moment relation
    tangent = recover_tangent_space(contract_24(fit.theta_hat), d, frame)
    alt_theta = frame.T @ contract_24(fit.alternative["theta_hat"]) @ frame
    discarded = sum(e.discarded for e in fit.estimates)

    report = CurvatureReport(
        manifold=M.spec_string(),
        x=x.tolist(),
        t_grid=fit.t_grid.tolist(),
        samples_per_t=fit.samples_per_t,
        fit_order=fit.fit_order,
        theta=_compare(theta_est, theta_th, theta_err),
        theta_uncontracted_max_z=theta_full_z,
        xi=_compare(parts[0], oracle.xi, parts_err[0]),
        xi_tangential=_compare(parts[1], oracle.xi_tangential, parts_err[1]),
        xi_normal=_compare(parts[2], oracle.xi_normal, parts_err[2]),
        recovered=recovered_values,
        conditioning=conds,
        tangent_recovery={
            "principal_cosines": tangent["principal_cosines"].tolist(),
            "eigenvalues": tangent["eigenvalues"].tolist(),
        },
        moment_relation={
            "max_z_per_t": list(fit.alternative["relation_max_z"]),
            "theta_tangent_alt": alt_theta.tolist(),
            "theta_alt_rel_err": relative_error(alt_theta, theta_th),
        },
        fit_residual=fit.chi2_per_dof,
        antisymmetry_max_z=anti_z,
        discarded=discarded,
    )
    logger.info(
        f"✅ Curvature report on {M.spec_string()}: S={recovered[0]:.4g} (oracle {oracle.scalar:.4g}), "
        f"|H|²={recovered[1]:.4g} (oracle {oracle.mean_curvature_sq:.4g})"
    )
    return report
