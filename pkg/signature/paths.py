# signature/paths.py
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import iisignature
import numpy as np
import pandas as pd

from algebra.truncated_tensor import TensorShapeError, TruncatedTensor, level_cap
from config.constants import GEODESIC_SAMPLES_PER_UNIT
from geometry.manifolds import EmbeddedManifold

logger = logging.getLogger(__name__)

PROVENANCES = ("bridge", "bm", "geodesic", "user")


@dataclass
class AmbientPath:
    """Ordered ambient points with strictly increasing time stamps in [0, 1]."""
    points: np.ndarray  # (K+1, N)
    times: np.ndarray  # (K+1,)
    provenance: str = "user"
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.points.ndim != 2:
            raise ValueError(f"points must be (K+1, N), got {self.points.shape}")
        if self.times.shape != (self.points.shape[0],):
            raise ValueError("one time stamp per point is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time stamps must be strictly increasing")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance '{self.provenance}'")

    @classmethod
    def uniform(cls, points: np.ndarray, provenance: str = "user", meta: Optional[Dict] = None) -> "AmbientPath":
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        times = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
        return cls(points, times, provenance, dict(meta or {}))

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    def reversed(self) -> "AmbientPath":
        return AmbientPath(self.points[::-1].copy(), 1.0 - self.times[::-1], self.provenance, dict(self.meta))

    def concatenate(self, other: "AmbientPath") -> "AmbientPath":
        """Join at the shared endpoint; the time axis is rescaled to [0, 1]."""
        if not np.allclose(self.points[-1], other.points[0], atol=1e-12):
            raise ValueError("paths do not share an endpoint")
        pts = np.concatenate([self.points, other.points[1:]])
        return AmbientPath.uniform(pts, self.provenance)

    def to_csv(self, file: Union[str, Path]):
        cols = {"t": self.times}
        for i in range(self.ambient_dim):
            cols[f"x{i + 1}"] = self.points[:, i]
        pd.DataFrame(cols).to_csv(file, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, file: Union[str, Path], provenance: str = "user") -> "AmbientPath":
        frame = pd.read_csv(file)
        if list(frame.columns[:1]) != ["t"]:
            raise ValueError(f"path file {file} must start with a 't' column")
        coords = [c for c in frame.columns if c != "t"]
        return cls(frame[coords].to_numpy(dtype=float), frame["t"].to_numpy(dtype=float), provenance)


def signature_of_points(points: np.ndarray, max_level: int) -> TruncatedTensor:
    """
    Chordal signature of one or many polylines.

    Args:
        points: (K+1, N) or batched (B, K+1, N)
        max_level: truncation level

    Returns:
        Group-like TruncatedTensor (batch shape () or (B,))
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[-1]
    if max_level > level_cap(n):
        raise TensorShapeError(f"level {max_level} exceeds cap {level_cap(n)} for N={n}")
    batch = points.shape[:-2]
    if max_level == 0 or points.shape[-2] < 2:
        return TruncatedTensor.unit(n, max_level, batch)
    # iisignature packs levels 1..m row-major, the layout TruncatedTensor uses
    flat = np.asarray(iisignature.sig(np.ascontiguousarray(points), max_level), dtype=float)
    bounds = np.cumsum([n ** k for k in range(1, max_level + 1)])[:-1]
    levels = [np.ones(batch + (1,))] + np.split(flat, bounds, axis=-1)
    return TruncatedTensor(levels, n)


def sig_piecewise_linear(path: AmbientPath, max_level: int) -> TruncatedTensor:
    """Exact signature of the chordal interpolation."""
    if path.points.shape[0] < 2:
        logger.warning("⚠️ Degenerate single-point path, returning the unit tensor")
        return TruncatedTensor.unit(path.ambient_dim, max_level)
    return signature_of_points(path.points, max_level)


def geodesic_path(
    M: EmbeddedManifold,
    p: np.ndarray,
    q: np.ndarray,
    samples_per_unit_length: int = GEODESIC_SAMPLES_PER_UNIT,
) -> AmbientPath:
    """Minimizing geodesic p -> q sampled uniformly in arc length."""
    length = M.distance(p, q)
    n_segments = max(1, int(math.ceil(length * samples_per_unit_length)))
    pts = M.geodesic_points(np.asarray(p, dtype=float), np.asarray(q, dtype=float), n_segments)
    return AmbientPath.uniform(pts, "geodesic", {"length": length, "segments": n_segments})


def sig_geodesic(
    M: EmbeddedManifold,
    p: np.ndarray,
    q: np.ndarray,
    max_level: int,
    samples_per_unit_length: int = GEODESIC_SAMPLES_PER_UNIT,
) -> TruncatedTensor:
    """
    Signature of F∘γ for the minimizing geodesic γ from p to q.

    Args:
        M: manifold (p, q are ambient points on it)
        p: start point
        q: end point, d(p, q) < ρ_M
        max_level: truncation level
        samples_per_unit_length: arc-length sampling density

    Returns:
        Group-like TruncatedTensor
    """
    path = geodesic_path(M, p, q, samples_per_unit_length)
    return sig_piecewise_linear(path, max_level)
