"""Editable-region mask built from superpixel patches, no user drawing.

For every handle/target pair the mask takes the whole patch containing the
handle plus every patch the straight handle-to-target segment passes
through. Patch membership along the segment is resolved exactly: the
segment is split at every pixel-rounding boundary it crosses, so even
patches it clips for a fraction of a pixel are included (plain fixed-step
sampling misses those corner slivers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import BoundsError, ParameterError
from .grid import Grid, Point
from .superpixel import Segmentation



@dataclass(frozen=True)
class DragInstruction:
    """Ordered handle/target pairs plus the optimization budget.

    ``n_steps`` is the user-chosen step count defining the ideal per-step
    distance; ``max_updates`` caps total updates so backtracking cannot
    loop forever.
    """

    pairs: tuple[tuple[Point, Point], ...]
    n_steps: int = 16
    max_updates: int = 300
    learning_rate: float = 0.01
    stop_radius: float = 1.0

    def __post_init__(self) -> None:
        if len(self.pairs) < 1:
            raise ParameterError("instruction needs at least one pair")
        if self.n_steps < 1:
            raise ParameterError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.max_updates < self.n_steps:
            raise ParameterError(
                f"max_updates ({self.max_updates}) must be >= n_steps ({self.n_steps})"
            )
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be positive")
        if self.stop_radius < 0:
            raise ParameterError("stop_radius must be >= 0")

    @staticmethod
    def from_pairs(
        pairs,
        **kwargs,
    ) -> "DragInstruction":
        tup = tuple(
            (Point(float(h[0]), float(h[1])), Point(float(t[0]), float(t[1])))
            for h, t in pairs
        )
        return DragInstruction(pairs=tup, **kwargs)


@dataclass(frozen=True)
class Mask:
    """Binary editable region; always a union of whole superpixel patches."""

    grid: np.ndarray  # (H, W) bool
    source_labels: frozenset[int] = field(default_factory=frozenset)

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]


def _crossing_params(p0: float, p1: float) -> np.ndarray:
    """Parameters where the coordinate crosses a pixel-rounding boundary
    (half-integers, since pixel i covers [i-0.5, i+0.5))."""
    if p1 == p0:
        return np.empty(0)
    lo, hi = sorted((p0, p1))
    ks = np.arange(np.ceil(lo - 0.5), np.floor(hi - 0.5) + 1) + 0.5
    ts = (ks - p0) / (p1 - p0)
    return ts[(ts > 0) & (ts < 1)]


def _segment_labels(seg: Segmentation, a: Point, b: Point) -> set[int]:
    """Labels of every patch the segment a->b enters, exactly."""
    ts = np.concatenate(
        [[0.0, 1.0], _crossing_params(a.x, b.x), _crossing_params(a.y, b.y)]
    )
    ts = np.unique(ts)
    mids = np.concatenate([ts, (ts[:-1] + ts[1:]) / 2.0])
    xs = a.x + (b.x - a.x) * mids
    ys = a.y + (b.y - a.y) * mids
    ix = np.floor(xs + 0.5).astype(int)
    iy = np.floor(ys + 0.5).astype(int)
    return set(int(v) for v in np.unique(seg.labels[iy, ix]))


def generate_mask(
    seg: Segmentation, instr: DragInstruction, dilation: int = 0
) -> Mask:
    """Union of handle patches and patches crossed by each drag segment."""
    h, w = seg.labels.shape
    chosen: set[int] = set()
    for handle, target in instr.pairs:
        for p in (handle, target):
            if not (0 <= p.x <= w - 1 and 0 <= p.y <= h - 1):
                raise BoundsError(
                    f"point (x={p.x}, y={p.y}) outside grid "
                    f"[0, {w - 1}] x [0, {h - 1}]"
                )
        chosen |= _segment_labels(seg, handle, target)
    grid = np.isin(seg.labels, sorted(chosen))
    if dilation > 0:
        grid = ndimage.binary_dilation(grid, iterations=dilation)
    grid.flags.writeable = False
    return Mask(grid=grid, source_labels=frozenset(chosen))


def full_mask(height: int, width: int) -> Mask:
    grid = np.ones((height, width), dtype=bool)
    grid.flags.writeable = False
    return Mask(grid=grid)


def mask_complement_weighting(mask: Mask) -> Grid:
    """H×W×1 grid: 0 inside the mask, 1 outside."""
    return Grid.from_array((~mask.grid).astype(np.float32)[:, :, None])


def write_mask_png(mask: Mask, path) -> None:
    """1-bit PNG, white inside the mask."""
    Image.fromarray(mask.grid).convert("1").save(path, format="PNG")


def read_mask_png(path) -> Mask:
    """Import an externally drawn mask (any PNG; nonzero pixels are inside)."""
    img = Image.open(path).convert("L")
    grid = np.asarray(img) > 0
    grid.flags.writeable = False
    return Mask(grid=grid)
