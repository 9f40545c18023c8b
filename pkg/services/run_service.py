# services/run_service.py
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from algebra.truncated_tensor import TruncatedTensor, contract_24, normalized_level_norm
from config.constants import (
    DEFAULT_T_GRID,
    DISCARD_WARN_FRACTION,
    MODE_SMALL_TIME,
    PDE_EPS_DEFAULT,
    POLICY_DROP,
)
from data.cache_manager import CacheManager
from estimator.curvature_fit import fit_psi4
from estimator.curvature_report import curvature_report
from estimator.distance import reconstruct_distance
from estimator.expected_signature import expected_signature
from geometry.catalog import make_manifold
from geometry.expansion import theoretical_expansion_tensors
from geometry.identities import verify_identities
from geometry.manifolds import EmbeddedManifold
from geometry.normal_chart import NormalChart
from oracle.bridge import bridge_check, evaluate_table
from oracle.cases import TOTALS, audit_golden, eval_case, parse_case
from oracle.labels import DELTA3
from oracle.tables import CoefficientTable, load_golden
from pde import solvers
from schemas.reports import PDESummary, Report, RunConfig, SignatureReport, write_report
from signature.paths import AmbientPath, sig_geodesic, sig_piecewise_linear
from sim.heat_kernel import HeatKernelModel
from sim.sampler import sample_bm, sample_bridge
from utils.run_tracker import RunTracker

logger = logging.getLogger(__name__)

PDE_PROBLEMS = ["euclidean", "circle-bm", "circle-bridge", "loop-t2"]
TABLE_FORMS = ["raw", "contracted", "substituted"]


@dataclass
class RunOutcome:
    """What one subcommand produced before it is written out."""
    result: Dict
    summary: str
    series: Optional[pd.DataFrame] = None
    schema: Optional[str] = None
    files: List[str] = field(default_factory=list)
    output: Optional[str] = None  # printed to stdout before the summary


def parse_point(text: Optional[str]) -> Optional[np.ndarray]:
    """'1,0,0' -> array([1., 0., 0.]); None passes through."""
    if text is None:
        return None
    try:
        return np.array([float(v) for v in str(text).split(",") if v.strip()], dtype=float)
    except ValueError:
        raise ValueError(f"bad point '{text}', expected comma-separated numbers")


def tensor_frame(sig: TruncatedTensor, stderr: Optional[List[np.ndarray]] = None) -> pd.DataFrame:
    """Long table (level, entry_index, value[, stderr]) of a truncated tensor."""
    rows = []
    for k in range(1, sig.max_level + 1):
        values = np.asarray(sig.level(k)).ravel()
        for i, v in enumerate(values):
            row = {"level": k, "entry_index": i, "value": float(v)}
            if stderr is not None:
                row["stderr"] = float(np.ravel(stderr[k])[i])
            rows.append(row)
    return pd.DataFrame(rows)


def table_frame(table: CoefficientTable) -> pd.DataFrame:
    return pd.DataFrame(
        [{"label": label, "pattern": pattern, "value": str(value)} for (label, pattern), value in table.items()],
        columns=["label", "pattern", "value"],
    )


def coefficient_line(table: CoefficientTable) -> str:
    """
    One-line rendering of a table.

    A single label over the three-pairing δ basis prints its coefficients
    in basis order, zeros included; anything else prints label:pattern=value.
    """
    labels = {label for label, _ in table.entries}
    if len(labels) == 1 and table.basis == "delta3":
        label = labels.pop()
        return ", ".join(str(table.get(label, p)) for p in DELTA3)
    return "; ".join(
        f"{label}{':' + pattern if pattern else ''}={value}" for (label, pattern), value in table.items()
    ) or "0"


class RunService:
    """
    Orchestrates one CLI run: build inputs, call the module pipeline,
    write report.json and series.csv
    """

    def __init__(
        self,
        config: RunConfig,
        out_dir: Path,
        tracker: Optional[RunTracker] = None,
        cache: Optional[CacheManager] = None,
    ):
        self.config = config
        self.out_dir = Path(out_dir)
        self.tracker = tracker or RunTracker()
        self.cache = cache
        self.params = dict(config.params)
        self.runners: Dict[str, Callable[[], RunOutcome]] = {
            "sig": self._run_sig,
            "bridge-sample": self._run_bridge_sample,
            "expected-sig": self._run_expected_sig,
            "recon-distance": self._run_recon_distance,
            "recon-curvature": self._run_recon_curvature,
            "pde": self._run_pde,
            "oracle": self._run_oracle,
            "geometry-check": self._run_geometry_check,
        }

    def run(self) -> RunOutcome:
        """
        Execute the configured subcommand and write its outputs.

        Returns:
            RunOutcome with the result payload and the one-line summary
        """
        command = self.config.command
        if command not in self.runners:
            raise ValueError(f"unknown subcommand '{command}'")
        try:
            logger.info(f"🔄 Starting {command} (seed={self.config.seed}, workers={self.config.workers})")

            # STEP 1: run the module pipeline
            outcome = self.runners[command]()

            # STEP 2: plot data
            if outcome.series is not None:
                self.out_dir.mkdir(parents=True, exist_ok=True)
                series_path = self.out_dir / "series.csv"
                outcome.series.to_csv(series_path, index=False)
                outcome.files.append(str(series_path))

            # STEP 3: report envelope, validated against the shipped schemas
            report = Report(config=self.config, tracker=self.tracker.get_summary(), result=outcome.result)
            outcome.files.insert(0, str(write_report(report, self.out_dir, outcome.schema)))

            logger.info(f"✅ {command} complete: {outcome.summary}")
            return outcome
        except Exception as e:
            logger.error(f"{command} failed: {e}")
            raise

    # helpers

    def _param(self, key: str, default=None):
        value = self.params.get(key)
        return default if value is None else value

    def _t_grid(self) -> List[float]:
        return [float(v) for v in str(self._param("t_grid", DEFAULT_T_GRID)).split(",") if v.strip()]

    def _manifold(self) -> EmbeddedManifold:
        if not self.config.manifold:
            raise ValueError(f"{self.config.command} needs --manifold")
        return make_manifold(self.config.manifold)

    def _point(self, M: EmbeddedManifold, key: str, required: bool = False) -> Optional[np.ndarray]:
        point = parse_point(self.params.get(key))
        if point is None:
            if required:
                raise ValueError(f"{self.config.command} needs --{key}")
            return None
        if point.shape != (M.ambient_dim,):
            raise ValueError(f"--{key} needs {M.ambient_dim} coordinates, got {point.size}")
        return point

    def _base_point(self, M: EmbeddedManifold) -> np.ndarray:
        x = self._point(M, "x")
        return M.embed(M.base_chart_point()) if x is None else x

    def _heat_model(self, M: EmbeddedManifold) -> HeatKernelModel:
        return HeatKernelModel(M, self._param("heat_kernel", MODE_SMALL_TIME))

    def _warn_discards(self, discarded: int, samples: int):
        if samples and discarded / samples > DISCARD_WARN_FRACTION:
            logger.warning(f"⚠️ {discarded:,} of {samples:,} paths discarded ({discarded / samples:.2%})")

    # subcommands

    def _run_sig(self) -> RunOutcome:
        level = int(self._param("level", 4))
        path_file = self.params.get("path")
        if path_file:
            # STEP 1: signature of a user path
            path = AmbientPath.from_csv(path_file)
            sig = sig_piecewise_linear(path, level)
            source = str(path_file)
        else:
            # STEP 1: signature of the minimizing geodesic x -> y
            M = self._manifold()
            x = self._base_point(M)
            y = self._point(M, "y", required=True)
            sig = sig_geodesic(M, x, y, level)
            source = f"geodesic on {M.spec_string()}"
        norms = [float(normalized_level_norm(sig, k)) for k in range(1, level + 1)]
        result = {"source": source, "level": level, "normalized_norms": norms, "signature": sig.to_json()}
        return RunOutcome(
            result=result,
            summary=f"signature of {source} to level {level}; (n!|pi_n|)^(1/n) at n={level}: {norms[-1]:.6g}",
            series=tensor_frame(sig),
        )

    def _run_bridge_sample(self) -> RunOutcome:
        M = self._manifold()
        x = self._base_point(M)
        y = self._point(M, "y")
        t = float(self._param("t", 0.1))
        count = int(self._param("count", 1))
        paths_dir = self.out_dir / "paths"

        rows, files = [], []
        model = self._heat_model(M) if y is not None else None
        for i in range(count):
            if y is None:
                path = sample_bm(M, x, t, self.config.steps, self.config.seed, path_index=i)
                pts = path.points
                exited = False
                stem = paths_dir / f"bm_{i:04d}"
                path.to_csv(stem.with_suffix(".csv"))
            else:
                bridge = sample_bridge(M, x, y, t, self.config.steps, self.config.seed, model=model, path_index=i)
                pts = bridge.points
                exited = bridge.exited
                stem = paths_dir / f"bridge_{i:04d}"
                bridge.dump(stem)
            self.tracker.add_block(1, discarded=int(exited), exited=int(exited))
            files.append(str(stem.with_suffix(".csv")))
            rows.append({
                "path_index": i,
                "exited": bool(exited),
                "end_gap": float(np.linalg.norm(pts[-1] - (x if y is None else y))),
                "max_excursion": float(np.max(np.linalg.norm(pts - x, axis=1))),
            })
        process = "bm" if y is None else "bridge"
        result = {
            "manifold": M.spec_string(),
            "process": process,
            "t": t,
            "count": count,
            "paths": rows,
        }
        return RunOutcome(
            result=result,
            summary=f"{count} {process} path(s) on {M.spec_string()} written under {paths_dir}",
            series=pd.DataFrame(rows),
            files=files,
        )

    def _run_expected_sig(self) -> RunOutcome:
        M = self._manifold()
        x = self._base_point(M)
        y = self._point(M, "y")
        t = float(self._param("t", 0.05))
        level = int(self._param("level", 4))
        samples = int(self._param("samples", 10_000))
        policy = self._param("policy", POLICY_DROP)

        # STEP 1: Monte Carlo estimate
        estimate = expected_signature(
            M, x, y, t, level, samples,
            seed=self.config.seed,
            discard_policy=policy,
            steps=self.config.steps,
            model=self._heat_model(M) if y is not None else None,
            workers=self.config.workers,
            tracker=self.tracker,
        )
        self._warn_discards(estimate.discarded, estimate.samples)

        # STEP 2: report
        report = SignatureReport(
            manifold=M.spec_string(),
            process="bm" if y is None else "bridge",
            x=x.tolist(),
            y=None if y is None else y.tolist(),
            t=t,
            level=level,
            samples=samples,
            units=estimate.units,
            discarded=estimate.discarded,
            policy=policy,
            level_norms=[float(normalized_level_norm(estimate.mean, k)) for k in range(1, level + 1)],
            mean=[np.ravel(lv).tolist() for lv in estimate.mean.levels],
            stderr=[np.ravel(e).tolist() for e in estimate.stderr],
        )
        return RunOutcome(
            result=report.model_dump(),
            summary=(
                f"E[S] on {M.spec_string()} at t={t:g}, m={level}: {samples:,} samples, "
                f"{estimate.discarded:,} discarded"
            ),
            series=tensor_frame(estimate.mean, estimate.stderr),
        )

    def _run_recon_distance(self) -> RunOutcome:
        M = self._manifold()
        x = self._base_point(M)
        y = self._point(M, "y", required=True)

        report = reconstruct_distance(
            M, x, y,
            n_max=int(self._param("nmax", 8)),
            kappa=float(self._param("kappa", 1.0)),
            samples=int(self._param("samples", 10_000)),
            seed=self.config.seed,
            steps=self.config.steps,
            model=self._heat_model(M),
            workers=self.config.workers,
            tracker=self.tracker,
        )
        last = report.rows[-1]
        return RunOutcome(
            result=report.model_dump(),
            summary=f"d(x,y)={last.oracle:.4f}; estimate at n={last.n}: {last.estimate:.4f}",
            series=pd.DataFrame([r.model_dump() for r in report.rows]),
            schema="recon_distance",
        )

    def _run_recon_curvature(self) -> RunOutcome:
        M = self._manifold()
        x = self._base_point(M)
        t_grid = self._t_grid()
        samples = int(self._param("samples", 20_000))

        # STEP 1: fit the loop level-4 expected signature over the grid
        fit = fit_psi4(
            M, x, t_grid, samples,
            seed=self.config.seed,
            fit_order=int(self._param("fit_order", 4)),
            steps=self.config.steps,
            model=self._heat_model(M),
            workers=self.config.workers,
            tracker=self.tracker,
        )

        # STEP 2: theoretical Θ̂ from the oracle total on the normal chart
        theta_table = load_golden("leading_t2").totals["theta"]
        theta_theory = evaluate_table(theta_table, NormalChart(M, M.chart(x)))

        # STEP 3: recovered invariants
        report = curvature_report(fit, M, x, theta_level4_theory=theta_theory)
        self._warn_discards(report.discarded, samples * len(t_grid))

        rows = []
        for t, est in zip(fit.t_grid, fit.estimates):
            c = contract_24(est.mean.level(4, shaped=True))
            rows.append({"t": float(t), "trace_c_psi4": float(np.trace(c)), "discarded": est.discarded})
        return RunOutcome(
            result=report.model_dump(),
            summary=(
                f"S={report.recovered['S'].est:.4g} (oracle {report.recovered['S'].oracle:.4g}), "
                f"theta rel err {report.theta.rel_err:.2%}"
            ),
            series=pd.DataFrame(rows),
            schema="curvature",
        )

    def _run_pde(self) -> RunOutcome:
        problem = self._param("problem", "circle-bm")
        if problem not in PDE_PROBLEMS:
            raise ValueError(f"unknown pde problem '{problem}', expected one of {PDE_PROBLEMS}")
        t = float(self._param("t", 0.5))
        level = int(self._param("level", 4))
        grid = int(self._param("grid", 256))
        eps = float(self._param("eps", PDE_EPS_DEFAULT))
        files: List[str] = []

        if problem == "euclidean":
            d = int(self._param("dim", 2))
            solution = solvers.solve_euclidean(t, d, level, steps=self.config.steps)
            summary = PDESummary(problem=problem, level=level, eps=0.0, grid=1, steps=self.config.steps)
            result = {**summary.model_dump(), "max_diff_closed_form": solution.max_diff}
            return RunOutcome(
                result=result,
                summary=f"Euclidean E[S] at t={t:g}: RK4 vs closed form {solution.max_diff:.2e}",
                series=tensor_frame(solution.rk4),
            )

        if problem == "loop-t2":
            t_grid = self._t_grid()
            fit = solvers.loop_t2_coefficient(t_grid, grid, eps)
            summary = PDESummary(problem=problem, level=4, eps=eps, grid=grid, steps=len(t_grid))
            result = {**summary.model_dump(), **fit}
            return RunOutcome(result=result, summary=f"loop t² coefficient {fit['t2']:.3e}")

        # STEP 1: solve on the circle
        if problem == "circle-bm":
            field_ = solvers.solve_circle_bm(t, grid, level)
            error = solvers.level1_bm_error(field_)
        else:
            field_ = solvers.solve_circle_bridge(t, float(self._param("y_theta", 0.0)), grid, level, eps=eps)
            error = solvers.level1_bridge_error(field_)

        # STEP 2: diagnostics
        refinement = solvers.refinement_ratio(t, grid, 1) if problem == "circle-bm" else None
        field_path = self.out_dir / "field.csv"
        self.out_dir.mkdir(parents=True, exist_ok=True)
        files.append(str(field_.to_csv(field_path)))
        summary = PDESummary(
            problem=problem,
            level=level,
            eps=eps if problem == "circle-bridge" else 0.0,
            grid=grid,
            steps=int(field_.meta.get("steps", 0)),
            max_level1_error=error,
            refinement_change=refinement,
            files=[str(field_path)],
        )
        nodes = field_.theta
        series = pd.DataFrame({
            "theta": nodes,
            "level0": np.ravel(field_.values.scalar()),
            "level1_x": field_.level(1)[:, 0],
            "level1_y": field_.level(1)[:, 1],
        })
        return RunOutcome(
            result=summary.model_dump(),
            summary=f"{problem} t={t:g}, G={grid}, m={level}: level-1 error {error:.2e}",
            series=series,
            files=files,
        )

    def _run_oracle(self) -> RunOutcome:
        order = self._param("order", "t2")
        form = self._param("form", "raw")
        if form not in TABLE_FORMS:
            raise ValueError(f"unknown table form '{form}', expected one of {TABLE_FORMS}")

        if self.params.get("audit"):
            # STEP 1: full audit against the shipped tables
            audit = audit_golden(workers=self.config.workers or 1)
            rows = [
                {
                    "name": r.name,
                    "ok": r.ok,
                    "malformed": r.malformed,
                    "mismatches": len(r.rows),
                    "errors": len(r.errors),
                }
                for r in audit.reports
            ]
            return RunOutcome(
                result={"audit": audit.to_dict()},
                summary=(
                    f"{len(audit.reports)} rows audited, {audit.mismatches} mismatches "
                    f"({audit.errors} errors), {audit.malformed} flagged malformed"
                ),
                series=pd.DataFrame(rows),
            )

        total = self.params.get("total")
        if total:
            # STEP 1: aggregated total
            if total not in TOTALS:
                raise ValueError(f"unknown total '{total}', expected one of {sorted(TOTALS)}")
            table = TOTALS[total](self.config.workers or 1)
            title = f"total {total}"
        else:
            # STEP 1: one case, through the table cache
            case = self.params.get("case")
            if not case:
                raise ValueError("oracle needs one of --case, --total or --audit")
            desc = parse_case(case, order, self.params.get("directive"))
            table = self._cached_case(desc)
            title = str(desc)

        table = {"raw": table, "contracted": table.contracted(), "substituted": table.substituted()}[form]
        return RunOutcome(
            output=coefficient_line(table),
            result={"title": title, "form": form, "table": table.to_dict()},
            summary=f"{title}: {len(table)} entries",
            series=table_frame(table),
        )

    def _cached_case(self, desc) -> CoefficientTable:
        if self.cache is not None:
            cached = self.cache.get_table(desc)
            self.tracker.add_cache_lookup(cached is not None)
            if cached is not None:
                return cached
        table = eval_case(desc)
        self.tracker.add_oracle_case()
        logger.info(f"✅ Oracle case {desc} evaluated ({len(table)} entries)")
        if self.cache is not None:
            self.cache.put_table(desc, table)
        return table

    def _run_geometry_check(self) -> RunOutcome:
        M = self._manifold()
        x = self._base_point(M)
        chart_point = M.chart(x)

        # STEP 1: embedding identities
        identities = verify_identities(M, chart_point)

        # STEP 2: Θ and Ξ theory at x
        theory = theoretical_expansion_tensors(M, chart_point)

        # STEP 3: oracle totals evaluated on the normal chart
        bridge = bridge_check(M, chart_point)

        flat = identities["residuals"]
        worst = identities["max_residual"]
        return RunOutcome(
            result={
                "manifold": M.spec_string(),
                "x": x.tolist(),
                "identities": identities,
                "theory": theory.to_dict(),
                "oracle_bridge": bridge,
            },
            summary=(
                f"{M.spec_string()}: worst identity residual {worst:.2e}, "
                f"oracle bridge {'ok' if bridge['ok'] else 'MISMATCH'}"
            ),
            series=pd.DataFrame(
                [{"check": k, "residual": v} for k, v in sorted(flat.items())]
                + [{"check": f"oracle_{k}", "residual": v} for k, v in sorted(bridge["residuals"].items())]
            ),
        )
