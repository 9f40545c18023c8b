# estimator/expected_signature.py
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from algebra.truncated_tensor import TensorShapeError, TruncatedTensor, level_cap
from config.constants import (
    BLOCK_SIZE,
    DEFAULT_STEPS,
    DISCARD_POLICIES,
    DISCARD_WARN_FRACTION,
    MIN_BLOCKS,
    MODE_SMALL_TIME,
    POLICY_DROP,
    SIGNATURE_ENTRY_BUDGET,
)
from config.settings import settings
from geometry.manifolds import EmbeddedManifold
from sim.heat_kernel import HeatKernelModel
from sim.sampler import BlockResult, check_parameters, default_chart_radius, simulate_block
from sim.seeding import block_ranges
from utils.run_tracker import RunTracker

logger = logging.getLogger(__name__)


class EstimatorError(Exception):
    """Custom exception for Monte Carlo estimator failures"""
    pass


class IllConditionedError(EstimatorError):
    """Raised when a recovery linear system is too ill-conditioned to trust"""
    pass


@dataclass
class Moments:
    """Count, sum and centered sum of squares of a batch of vectors (mergeable)."""
    count: int
    total: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        n = values.shape[0]
        if n == 0:
            zero = np.zeros(values.shape[1:])
            return cls(0, zero, zero.copy())
        mean = values.mean(axis=0)
        return cls(n, values.sum(axis=0), ((values - mean) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.total / other.count - self.total / self.count
        m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / n
        return Moments(n, self.total + other.total, m2)

    @property
    def mean(self) -> np.ndarray:
        return self.total / self.count

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.total, np.nan)
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.count - 1) / self.count)


@dataclass
class BlockMoments:
    """Per-block accumulators, kept in block order for the jackknife."""
    start: int
    stop: int
    signature: Moments
    discarded: int
    exited: int
    half_outer: Optional[Moments] = None  # ½ S₂⊗S₂
    relation: Optional[Moments] = None  # S₄ - ½ S₂⊗S₂


@dataclass
class SignatureEstimate:
    """Monte Carlo estimate of an expected signature plus its error data."""
    mean: TruncatedTensor
    stderr: List[np.ndarray]  # per level, same layout as mean.levels
    samples: int
    units: int
    discarded: int
    exited: int
    policy: str
    lifetime: float
    start: np.ndarray
    end: Optional[np.ndarray]
    blocks: List[BlockMoments] = field(default_factory=list)
    half_outer: Optional[np.ndarray] = None
    half_outer_stderr: Optional[np.ndarray] = None
    relation_stderr: Optional[np.ndarray] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.discarded > self.samples:
            raise EstimatorError("discard count exceeds sample count")

    @property
    def ambient_dim(self) -> int:
        return self.mean.ambient_dim

    @property
    def level(self) -> int:
        return self.mean.max_level

    @property
    def discard_fraction(self) -> float:
        return self.discarded / self.samples if self.samples else 0.0

    def level_stderr(self, k: int, shaped: bool = False) -> np.ndarray:
        err = self.stderr[k]
        return err.reshape((self.ambient_dim,) * k) if shaped else err

    def jackknife(self, func: Callable[[TruncatedTensor], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Delete-one-block jackknife of a (nonlinear) functional of the mean.

        Returns:
            (value at the full mean, jackknife standard error); the error is
            NaN with fewer than two non-empty blocks
        """
        value = np.asarray(func(self.mean), dtype=float)
        used = [b for b in self.blocks if b.signature.count > 0]
        if len(used) < 2:
            return value, np.full_like(value, np.nan)
        total = sum(b.signature.total for b in used)
        count = sum(b.signature.count for b in used)
        leave_out = []
        for b in used:
            flat = (total - b.signature.total) / (count - b.signature.count)
            leave_out.append(np.asarray(func(_unflatten(flat, self.ambient_dim, self.level)), dtype=float))
        leave_out = np.stack(leave_out)
        g = len(used)
        spread = leave_out - leave_out.mean(axis=0)
        return value, np.sqrt((g - 1) / g * np.sum(spread ** 2, axis=0))

    def to_dict(self, include_levels: bool = True) -> Dict:
        out = {
            "ambient_dim": self.ambient_dim,
            "max_level": self.level,
            "samples": self.samples,
            "units": self.units,
            "discarded": self.discarded,
            "exited": self.exited,
            "policy": self.policy,
            "lifetime": self.lifetime,
            "start": self.start.tolist(),
            "end": None if self.end is None else self.end.tolist(),
            "meta": dict(self.meta),
        }
        if include_levels:
            out["mean"] = [lv.tolist() for lv in self.mean.levels]
            out["stderr"] = [e.tolist() for e in self.stderr]
        return out


def level_offsets(n: int, level: int) -> List[int]:
    return list(np.cumsum([0] + [n ** k for k in range(level + 1)]))


def _unflatten(flat: np.ndarray, n: int, level: int) -> TruncatedTensor:
    off = level_offsets(n, level)
    return TruncatedTensor([flat[..., off[k]: off[k + 1]] for k in range(level + 1)], n)


def block_size_for(ambient_dim: int, level: int, samples: int, antithetic: bool) -> int:
    """Paths per block; depends on the problem size only, never on the worker count."""
    budget = max(2, SIGNATURE_ENTRY_BUDGET // ambient_dim ** level)
    size = max(2, min(BLOCK_SIZE, budget, math.ceil(samples / MIN_BLOCKS)))
    if antithetic and size % 2:
        size += 1
    return size


def resolve_workers(workers: Optional[int] = None) -> int:
    return max(1, workers or settings.SIGMANI_THREADS or os.cpu_count() or 1)


def summarize_block(
    block: BlockResult, policy: str, antithetic: bool, second_moment: bool
) -> BlockMoments:
    """
    Reduce a simulated block to unit moments.

    A unit is one path, or one antithetic pair (2i, 2i+1) averaged; under the
    drop policy a pair is discarded as a whole when either member exited.
    """
    sig = block.signature
    n = sig.ambient_dim
    values = np.concatenate(sig.levels, axis=-1)  # (B, total entries)
    idx = np.arange(block.start, block.stop)
    ids = idx // 2 if antithetic else idx
    _, inverse, counts = np.unique(ids, return_inverse=True, return_counts=True)
    member = (inverse[None, :] == np.arange(counts.size)[:, None]) / counts[:, None]

    if policy == POLICY_DROP:
        bad = np.bincount(inverse, weights=block.exited.astype(float), minlength=counts.size) > 0
    else:
        bad = np.zeros(counts.size, dtype=bool)
    keep = ~bad
    discarded = int(counts[bad].sum())
    units = member[keep] @ values

    half_outer = relation = None
    if second_moment:
        s2 = sig.levels[2]
        outer = 0.5 * np.einsum("bi,bj->bij", s2, s2).reshape(s2.shape[0], n ** 4)
        unit_outer = member[keep] @ outer
        half_outer = Moments.of(unit_outer)
        relation = Moments.of(member[keep] @ sig.levels[4] - unit_outer)

    return BlockMoments(
        start=block.start,
        stop=block.stop,
        signature=Moments.of(units),
        discarded=discarded,
        exited=int(block.exited.sum()),
        half_outer=half_outer,
        relation=relation,
    )


def expected_signature(
    M: EmbeddedManifold,
    x: np.ndarray,
    y: Optional[np.ndarray],
    t: float,
    level: int,
    samples: int,
    seed: int = 0,
    discard_policy: str = POLICY_DROP,
    steps: int = DEFAULT_STEPS,
    antithetic: Optional[bool] = None,
    model: Optional[HeatKernelModel] = None,
    chart_radius: Optional[float] = None,
    second_moment: bool = False,
    workers: Optional[int] = None,
    tracker: Optional[RunTracker] = None,
) -> SignatureEstimate:
    """
    Monte Carlo expected signature of bridges x -> y (or Brownian motion when y is None).

    Args:
        M: manifold
        x: start point
        y: end point; y = x gives loops, None gives unconditioned Brownian motion
        t: lifetime
        level: truncation level m
        samples: number of paths (>= 2)
        seed: master seed
        discard_policy: "drop" (exclude exited paths) or "keep-all"
        steps: time steps per path
        antithetic: pair paths with negated noise (default: on for loops)
        model: heat kernel model for the bridge drift
        chart_radius: exit threshold (default 0.9 rho_M)
        second_moment: also estimate ½E[S₂⊗S₂] and the S₄ relation (level >= 4)
        workers: thread count (default SIGMANI_THREADS or all cores)
        tracker: optional RunTracker

    Returns:
        SignatureEstimate
    """
    x = np.asarray(x, dtype=float)
    n = M.ambient_dim
    if level > level_cap(n):
        raise TensorShapeError(f"level {level} exceeds cap {level_cap(n)} for N={n}")
    if level < 1:
        raise EstimatorError(f"level must be at least 1, got {level}")
    if samples < 2:
        raise EstimatorError(f"need at least 2 samples, got {samples}")
    if discard_policy not in DISCARD_POLICIES:
        raise EstimatorError(f"unknown discard policy '{discard_policy}'")
    if second_moment and level < 4:
        raise EstimatorError("the second-moment relation needs level >= 4")

    bridge = y is not None
    chart_radius = default_chart_radius(M) if chart_radius is None else float(chart_radius)
    check_parameters(M, t, steps, chart_radius)
    if bridge:
        y = np.asarray(y, dtype=float)
        model = model or HeatKernelModel(M, MODE_SMALL_TIME)
        model.check_small_time(x, y)
    if antithetic is None:
        antithetic = bridge and bool(np.allclose(x, y))

    size = block_size_for(n, level, samples, antithetic)
    ranges = block_ranges(samples, size)
    n_workers = resolve_workers(workers)
    logger.info(
        f"🔄 Sampling {samples:,} paths on {M.spec_string()} (t={t:g}, m={level}, K={steps}) "
        f"in {len(ranges)} blocks on {n_workers} workers"
    )

    def run_block(bounds: Tuple[int, int]) -> BlockMoments:
        start, stop = bounds
        block = simulate_block(
            M, x, y, t, steps, seed, start, stop,
            model=model, chart_radius=chart_radius, antithetic=antithetic, sig_level=level,
        )
        summary = summarize_block(block, discard_policy, antithetic, second_moment)
        if tracker is not None:
            tracker.add_block(stop - start, summary.discarded, summary.exited)
        return summary

    if n_workers == 1:
        blocks = [run_block(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as executor:
            blocks = list(executor.map(run_block, ranges))

    # merge strictly in block order
    total = blocks[0].signature
    for b in blocks[1:]:
        total = total.merge(b.signature)
    discarded = sum(b.discarded for b in blocks)
    exited = sum(b.exited for b in blocks)
    if total.count == 0:
        raise EstimatorError(f"all {samples} samples were discarded (exited the chart)")
    fraction = discarded / samples
    if fraction > DISCARD_WARN_FRACTION:
        logger.warning(f"⚠️ Discarded {discarded}/{samples} paths ({fraction:.2%}) that left the chart")

    mean = _unflatten(total.mean, n, level)
    stderr_flat = total.stderr
    off = level_offsets(n, level)
    stderr = [stderr_flat[off[k]: off[k + 1]] for k in range(level + 1)]

    estimate = SignatureEstimate(
        mean=mean,
        stderr=stderr,
        samples=samples,
        units=total.count,
        discarded=discarded,
        exited=exited,
        policy=discard_policy,
        lifetime=t,
        start=x,
        end=y,
        blocks=blocks,
        meta={
            "steps": steps,
            "seed": seed,
            "antithetic": antithetic,
            "block_size": size,
            "heat_kernel": model.mode if model is not None else None,
            "process": "bridge" if bridge else "bm",
        },
    )
    if second_moment:
        outer = blocks[0].half_outer
        relation = blocks[0].relation
        for b in blocks[1:]:
            outer = outer.merge(b.half_outer)
            relation = relation.merge(b.relation)
        estimate.half_outer = outer.mean
        estimate.half_outer_stderr = outer.stderr
        estimate.relation_stderr = relation.stderr
    logger.info(f"✅ Expected signature ready ({total.count:,} units, {discarded} discarded)")
    return estimate
