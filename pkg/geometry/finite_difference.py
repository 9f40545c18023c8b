# geometry/finite_difference.py
from typing import Callable

import numpy as np

from config.constants import FD_STEP_1, FD_STEP_2, FD_STEP_3

# func maps a batch of chart points (P, d) to values (P, *out)
ChartFunction = Callable[[np.ndarray], np.ndarray]


def _richardson(estimate: Callable[[float], np.ndarray], h: float) -> np.ndarray:
    # one Richardson level for O(h^2) central schemes
    return (4.0 * estimate(h / 2.0) - estimate(h)) / 3.0


def first_derivative(func: ChartFunction, x: np.ndarray, h: float = FD_STEP_1) -> np.ndarray:
    """Central first derivatives; result shape out + (d,)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    eye = np.eye(d)

    def estimate(step: float) -> np.ndarray:
        pts = np.concatenate([x + step * eye, x - step * eye])
        vals = np.asarray(func(pts))
        diff = (vals[:d] - vals[d:]) / (2.0 * step)
        return np.moveaxis(diff, 0, -1)

    return _richardson(estimate, h)


def second_derivative(func: ChartFunction, x: np.ndarray, h: float = FD_STEP_2) -> np.ndarray:
    """Central mixed second derivatives; result shape out + (d, d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    eye = np.eye(d)
    pairs = [(i, j) for i in range(d) for j in range(i, d)]

    def estimate(step: float) -> np.ndarray:
        pts = []
        for i, j in pairs:
            ei, ej = step * eye[i], step * eye[j]
            pts.extend([x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej])
        vals = np.asarray(func(np.array(pts)))
        out = np.zeros(vals.shape[1:] + (d, d))
        for n, (i, j) in enumerate(pairs):
            pp, pm, mp, mm = vals[4 * n: 4 * n + 4]
            val = (pp - pm - mp + mm) / (4.0 * step * step)
            out[..., i, j] = val
            out[..., j, i] = val
        return out

    return _richardson(estimate, h)


def third_derivative(func: ChartFunction, x: np.ndarray, h: float = FD_STEP_3) -> np.ndarray:
    """Central third derivatives (central difference of the mixed stencil), symmetrized."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    eye = np.eye(d)

    def estimate(step: float) -> np.ndarray:
        raw = None
        for k in range(d):
            plus = _mixed_at(func, x + step * eye[k], step)
            minus = _mixed_at(func, x - step * eye[k], step)
            slab = (plus - minus) / (2.0 * step)
            if raw is None:
                raw = np.zeros(slab.shape + (d,))
            raw[..., k] = slab
        return _symmetrize3(raw)

    return _richardson(estimate, h)


def _mixed_at(func: ChartFunction, x: np.ndarray, step: float) -> np.ndarray:
    d = x.shape[0]
    eye = np.eye(d)
    pts = []
    for i in range(d):
        for j in range(d):
            ei, ej = step * eye[i], step * eye[j]
            pts.extend([x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej])
    vals = np.asarray(func(np.array(pts)))
    vals = vals.reshape((d, d, 4) + vals.shape[1:])
    mixed = (vals[:, :, 0] - vals[:, :, 1] - vals[:, :, 2] + vals[:, :, 3]) / (4.0 * step * step)
    return np.moveaxis(mixed, (0, 1), (-2, -1))


def _symmetrize3(t: np.ndarray) -> np.ndarray:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    lead = t.ndim - 3
    total = np.zeros_like(t)
    for p in perms:
        total = total + np.transpose(t, tuple(range(lead)) + tuple(lead + q for q in p))
    return total / 6.0
