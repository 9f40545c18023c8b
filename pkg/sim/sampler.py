# sim/sampler.py
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from algebra.truncated_tensor import TruncatedTensor, segment_extend
from config.constants import DEFAULT_STEPS, DRIFT_CLAMP_FRACTION, MODE_SMALL_TIME, SMALL_TIME_RADIUS_FRACTION
from geometry.manifolds import EmbeddedManifold
from signature.paths import AmbientPath
from sim.heat_kernel import HeatKernelModel, SamplerError
from sim.seeding import block_noise

logger = logging.getLogger(__name__)


@dataclass
class BridgePath:
    """A sampled bridge (or Brownian) path plus its localization metadata."""
    path: AmbientPath
    exited: bool
    chart_radius: float
    steps: int
    lifetime: float
    master_seed: int
    path_index: int
    start: np.ndarray
    end: np.ndarray
    extra: Dict = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        return self.path.points

    def meta(self) -> Dict:
        return {
            "exited": bool(self.exited),
            "chart_radius": None if math.isinf(self.chart_radius) else float(self.chart_radius),
            "steps": int(self.steps),
            "lifetime": float(self.lifetime),
            "master_seed": int(self.master_seed),
            "path_index": int(self.path_index),
            "start": np.asarray(self.start).tolist(),
            "end": np.asarray(self.end).tolist(),
            "provenance": self.path.provenance,
            **self.extra,
        }

    def dump(self, stem: Union[str, Path]):
        """Write <stem>.csv (t,x1..xN) and the <stem>.json sidecar."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        self.path.to_csv(stem.with_suffix(".csv"))
        with open(stem.with_suffix(".json"), "w") as f:
            json.dump(self.meta(), f, indent=2)
        logger.info(f"✅ Path dumped to {stem.with_suffix('.csv')}")


@dataclass
class BlockResult:
    """Outcome of simulating one block of paths [start, stop)."""
    start: int
    stop: int
    final: np.ndarray  # (B, N)
    exited: np.ndarray  # (B,)
    signature: Optional[TruncatedTensor] = None  # batch (B,)
    points: Optional[np.ndarray] = None  # (B, K+1, N)


def default_chart_radius(M: EmbeddedManifold) -> float:
    return SMALL_TIME_RADIUS_FRACTION * M.injectivity_radius


def check_parameters(M: EmbeddedManifold, t: float, steps: int, chart_radius: float):
    if steps < 1:
        raise SamplerError(f"need at least one step, got K={steps}")
    if not t > 0.0:
        raise SamplerError(f"lifetime must be positive, got t={t}")
    if chart_radius <= 0.0 or chart_radius > default_chart_radius(M) * (1.0 + 1e-12):
        raise SamplerError(f"chart_radius must lie in (0, 0.9 rho_M], got {chart_radius}")


def simulate_block(
    M: EmbeddedManifold,
    x: np.ndarray,
    y: Optional[np.ndarray],
    t: float,
    steps: int,
    master_seed: int,
    start: int,
    stop: int,
    model: Optional[HeatKernelModel] = None,
    chart_radius: Optional[float] = None,
    antithetic: bool = False,
    sig_level: Optional[int] = None,
    record_points: bool = False,
) -> BlockResult:
    """
    Simulate paths start..stop-1 side by side.

    With y=None this is the geodesic random walk for Brownian motion;
    otherwise the bridge to y with heat-kernel drift, the drift clamp, the
    exit flag and forced closure on the last step. Each path draws its own
    stream, so a path is the same whichever block it is simulated in.

    Args:
        sig_level: accumulate the chordal signature up to this level
        record_points: keep every point (memory B*(K+1)*N)

    Returns:
        BlockResult in path-index order
    """
    x = np.asarray(x, dtype=float)
    n_paths = stop - start
    n = M.ambient_dim
    h = t / steps
    sqrt_h = math.sqrt(h)
    noise = block_noise(master_seed, start, stop, steps, n, antithetic)  # (B, K, N)

    bridge = y is not None
    if bridge:
        y = np.asarray(y, dtype=float)
        if model is None:
            model = HeatKernelModel(M, MODE_SMALL_TIME)
        radius = default_chart_radius(M) if chart_radius is None else chart_radius
        max_step = DRIFT_CLAMP_FRACTION * radius

    X = np.broadcast_to(x, (n_paths, n)).copy()
    exited = np.zeros(n_paths, dtype=bool)
    sig = TruncatedTensor.unit(n, sig_level, (n_paths,)) if sig_level else None
    points = np.empty((n_paths, steps + 1, n)) if record_points else None
    if record_points:
        points[:, 0] = X

    for k in range(steps):
        if bridge and k == steps - 1:
            X_new = np.broadcast_to(y, X.shape).copy()
        else:
            proj = M.tangent_projection(X)
            v = sqrt_h * np.einsum("bij,bj->bi", proj, noise[:, k])
            if bridge:
                u = t - k * h
                log_xy, valid = M.log_safe(X, y)
                drift = np.zeros_like(X)
                if np.any(valid):
                    drift[valid] = model.grad_log_p(u, X[valid], y, log_xy[valid])
                exited |= ~valid
                size = np.linalg.norm(drift, axis=-1) * h
                scale = np.where(size > max_step, max_step / np.where(size > 0.0, size, 1.0), 1.0)
                v = v + (h * scale)[:, None] * drift
            X_new = M.project(M.exp(X, v))
            if bridge and not math.isinf(radius):
                gap, ok = M.log_safe(X_new, y)
                exited |= ~ok | (np.linalg.norm(gap, axis=-1) > radius)
        if sig is not None:
            sig = segment_extend(sig, X_new - X)
        X = X_new
        if record_points:
            points[:, k + 1] = X

    return BlockResult(start, stop, X, exited, sig, points)


def sample_bm(
    M: EmbeddedManifold,
    x: np.ndarray,
    t: float,
    steps: int = DEFAULT_STEPS,
    seed: int = 0,
    path_index: int = 0,
) -> AmbientPath:
    """
    Geodesic random walk approximating Brownian motion (generator Δ/2).

    Each step projects an ambient standard Gaussian onto T_XM, scales it by
    √h and moves along exp; points stay on M by construction.
    """
    if steps < 1:
        raise SamplerError(f"need at least one step, got K={steps}")
    if not t > 0.0:
        raise SamplerError(f"lifetime must be positive, got t={t}")
    block = simulate_block(M, x, None, t, steps, seed, path_index, path_index + 1, record_points=True)
    meta = {"lifetime": t, "steps": steps, "master_seed": seed, "path_index": path_index}
    return AmbientPath(block.points[0], np.linspace(0.0, 1.0, steps + 1), "bm", meta)


def sample_bridge(
    M: EmbeddedManifold,
    x: np.ndarray,
    y: np.ndarray,
    t: float,
    steps: int = DEFAULT_STEPS,
    seed: int = 0,
    chart_radius: Optional[float] = None,
    model: Optional[HeatKernelModel] = None,
    path_index: int = 0,
) -> BridgePath:
    """
    Brownian bridge x -> y with lifetime t by Euler-Maruyama with retraction.

    Args:
        M: manifold
        x: start point on M
        y: end point on M
        t: lifetime
        steps: K, uniform grid s_k = t k / K
        seed: master seed
        chart_radius: exit threshold, at most 0.9 rho_M (default)
        model: heat kernel model for the drift (small-time by default)
        path_index: index of this path's stream under the master seed

    Returns:
        BridgePath ending exactly at y
    """
    model = model or HeatKernelModel(M, MODE_SMALL_TIME)
    radius = default_chart_radius(M) if chart_radius is None else float(chart_radius)
    check_parameters(M, t, steps, radius)
    model.check_small_time(x, y)
    block = simulate_block(
        M, x, y, t, steps, seed, path_index, path_index + 1,
        model=model, chart_radius=radius, record_points=True,
    )
    path = AmbientPath(block.points[0], np.linspace(0.0, 1.0, steps + 1), "bridge")
    if block.exited[0]:
        logger.warning(f"⚠️ Bridge path {path_index} left the chart of radius {radius:.4g}")
    return BridgePath(
        path=path,
        exited=bool(block.exited[0]),
        chart_radius=radius,
        steps=steps,
        lifetime=t,
        master_seed=seed,
        path_index=path_index,
        start=np.asarray(x, dtype=float),
        end=np.asarray(y, dtype=float),
        extra={"heat_kernel": model.mode},
    )
