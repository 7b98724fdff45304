"""Grid-to-image rendering for the UI.

Grids with more than three channels are reduced to three by principal
components so the client never has to interpret raw feature values; the
projection is computed here, deterministically (component signs are fixed
by their largest-magnitude coefficient).
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .grid import Grid


def _project_to_3(flat: np.ndarray) -> np.ndarray:
    """PCA projection of (n, c) rows onto their top 3 components."""
    centered = flat - flat.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:3]
    for i in range(comps.shape[0]):
        lead = np.argmax(np.abs(comps[i]))
        if comps[i, lead] < 0:
            comps[i] = -comps[i]
    out = centered @ comps.T
    if out.shape[1] < 3:
        out = np.pad(out, ((0, 0), (0, 3 - out.shape[1])))
    return out


def grid_view_rgb(grid: Grid) -> np.ndarray:
    """(H, W, 3) uint8 view of any grid."""
    h, w, c = grid.shape
    data = grid.data.astype(np.float64)
    if c == 1:
        rgb = np.repeat(data, 3, axis=2)
    elif c <= 3:
        rgb = np.zeros((h, w, 3))
        rgb[:, :, :c] = data
    else:
        rgb = _project_to_3(data.reshape(h * w, c)).reshape(h, w, 3)
    lo = rgb.min(axis=(0, 1), keepdims=True)
    hi = rgb.max(axis=(0, 1), keepdims=True)
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = np.where(hi > lo, (rgb - lo) / span, 0.5)
    return (scaled * 255).round().astype(np.uint8)


def grid_view_png(grid: Grid) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(grid_view_rgb(grid), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
