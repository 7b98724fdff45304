"""Shared test oracles: deliberately simple, loop-based reference code."""

from __future__ import annotations

import numpy as np

from dragforge.grid import Grid


def bilinear_oracle(data: np.ndarray, x: float, y: float) -> np.ndarray:
    """Brute-force weighted sum of the 4 surrounding pixels."""
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1 = min(x0 + 1, data.shape[1] - 1)
    y1 = min(y0 + 1, data.shape[0] - 1)
    fx, fy = x - x0, y - y0
    out = np.zeros(data.shape[2], dtype=np.float64)
    for (yy, xx, w) in [
        (y0, x0, (1 - fx) * (1 - fy)),
        (y0, x1, fx * (1 - fy)),
        (y1, x0, (1 - fx) * fy),
        (y1, x1, fx * fy),
    ]:
        out += w * data[yy, xx].astype(np.float64)
    return out


def finite_diff_grad(loss_fn, z: Grid, step: float = 1e-3) -> np.ndarray:
    """Central finite differences of a scalar loss over every latent entry.

    Divides by the step actually realized after float32 rounding, so the
    oracle is exact with respect to the grid's storage precision.
    """
    base = z.data.astype(np.float64)
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        plus = base.copy()
        plus[idx] = np.float32(base[idx] + step)
        minus = base.copy()
        minus[idx] = np.float32(base[idx] - step)
        realized = plus[idx] - minus[idx]
        grad[idx] = (
            loss_fn(Grid.from_array(plus)) - loss_fn(Grid.from_array(minus))
        ) / realized
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-based relative error of a against reference b."""
    denom = max(float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - b) / denom)
