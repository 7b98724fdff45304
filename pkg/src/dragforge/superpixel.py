"""SLIC superpixel clustering over a feature grid.

Clusters pixels in joint (feature, position) space: grid-seeded centers
iteratively claim pixels within a local window under the distance

    D = ||f_pixel - f_center||_2 + (compactness / S) * ||xy_pixel - xy_center||_2

with S = sqrt(H*W / n_segments), then move to their cluster means. A
post-pass makes every patch 4-connected by relabeling stray components and
absorbing small orphans into their largest neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import BoundsError, DataError, ParameterError
from .grid import Grid, Point, write_dft1

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class PatchCenter:
    x: float
    y: float
    mean_feature: np.ndarray


@dataclass(frozen=True)
class Segmentation:
    """Per-pixel patch labels plus per-patch centroids and mean features."""

    labels: np.ndarray  # (H, W) int32, values in [0, n_patches)
    n_patches: int
    centers: tuple[PatchCenter, ...]
    compactness: float
    features: Grid
    # (objective before, after) each assignment pass, against that pass's
    # centers; used to audit that assignment never increases the objective.
    objective_trace: tuple[tuple[float, float], ...] = field(default=())

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def _seed_grid(height: int, width: int, n_segments: int) -> tuple[int, int]:
    rows = max(1, round(np.sqrt(n_segments * height / width)))
    cols = max(1, int(np.ceil(n_segments / rows)))
    return rows, cols


def _initial_labels(height: int, width: int, rows: int, cols: int) -> np.ndarray:
    ys = np.minimum(np.arange(height) * rows // height, rows - 1)
    xs = np.minimum(np.arange(width) * cols // width, cols - 1)
    return (ys[:, None] * cols + xs[None, :]).astype(np.int32)


def _centers_from_labels(
    labels: np.ndarray, feats: np.ndarray, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster means; empty clusters keep NaN and are skipped by callers."""
    h, w, c = feats.shape
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n).astype(np.float64)
    ys, xs = np.mgrid[0:h, 0:w]
    pos = np.stack(
        [
            np.bincount(flat, weights=xs.ravel(), minlength=n),
            np.bincount(flat, weights=ys.ravel(), minlength=n),
        ],
        axis=1,
    )
    fsum = np.stack(
        [
            np.bincount(flat, weights=feats[:, :, k].ravel(), minlength=n)
            for k in range(c)
        ],
        axis=1,
    )
    safe = np.maximum(counts, 1.0)
    return pos / safe[:, None], fsum / safe[:, None]


def _objective(
    labels: np.ndarray,
    feats: np.ndarray,
    cpos: np.ndarray,
    cfeat: np.ndarray,
    spatial_weight: float,
) -> float:
    h, w, _ = feats.shape
    ys, xs = np.mgrid[0:h, 0:w]
    fc = cfeat[labels]
    df = np.sqrt(((feats - fc) ** 2).sum(axis=2))
    dx = xs - cpos[labels][:, :, 0]
    dy = ys - cpos[labels][:, :, 1]
    ds = np.sqrt(dx * dx + dy * dy)
    return float(np.sum(df + spatial_weight * ds))


def slic_segment(
    features: Grid,
    n_segments: int,
    compactness: float = 10.0,
    max_iters: int = 10,
    connectivity: bool = True,
) -> Segmentation:
    """Cluster the feature grid into roughly ``n_segments`` compact patches."""
    h, w, _ = features.shape
    if n_segments < 1 or n_segments > h * w:
        raise ParameterError(
            f"n_segments must be in [1, {h * w}], got {n_segments}"
        )
    if compactness <= 0:
        raise ParameterError(f"compactness must be positive, got {compactness}")
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")
    if not np.isfinite(features.data).all():
        raise DataError("features contain non-finite values")

    feats = features.data.astype(np.float64)
    spacing = np.sqrt(h * w / n_segments)
    spatial_weight = compactness / spacing
    rows, cols = _seed_grid(h, w, n_segments)
    n = rows * cols

    labels = _initial_labels(h, w, rows, cols)
    cpos = np.stack(
        np.meshgrid(
            (np.arange(cols) + 0.5) * w / cols,
            (np.arange(rows) + 0.5) * h / rows,
        ),
        axis=-1,
    ).reshape(n, 2)
    _, cfeat = _centers_from_labels(labels, feats, n)

    ys, xs = np.mgrid[0:h, 0:w]
    trace: list[tuple[float, float]] = []
    reach = int(np.ceil(spacing))
    for _ in range(max_iters):
        before = _objective(labels, feats, cpos, cfeat, spatial_weight)
        # Every pixel starts from its current assignment, so a pass can
        # only lower each pixel's distance.
        fc = cfeat[labels]
        dx = xs - cpos[labels][:, :, 0]
        dy = ys - cpos[labels][:, :, 1]
        best = np.sqrt(((feats - fc) ** 2).sum(axis=2)) + spatial_weight * np.sqrt(
            dx * dx + dy * dy
        )
        new_labels = labels.copy()
        for k in range(n):
            cx, cy = cpos[k]
            y0 = max(0, int(np.floor(cy)) - reach)
            y1 = min(h, int(np.ceil(cy)) + reach + 1)
            x0 = max(0, int(np.floor(cx)) - reach)
            x1 = min(w, int(np.ceil(cx)) + reach + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            df = np.sqrt(((feats[y0:y1, x0:x1] - cfeat[k]) ** 2).sum(axis=2))
            dx = xs[y0:y1, x0:x1] - cx
            dy = ys[y0:y1, x0:x1] - cy
            d = df + spatial_weight * np.sqrt(dx * dx + dy * dy)
            win = best[y0:y1, x0:x1]
            improve = d < win
            new_labels[y0:y1, x0:x1][improve] = k
            win[improve] = d[improve]
        after = _objective(new_labels, feats, cpos, cfeat, spatial_weight)
        trace.append((before, after))
        changed = bool((new_labels != labels).any())
        labels = new_labels
        npos, nfeat = _centers_from_labels(labels, feats, n)
        occupied = np.bincount(labels.ravel(), minlength=n) > 0
        cpos = np.where(occupied[:, None], npos, cpos)
        cfeat = np.where(occupied[:, None], nfeat, cfeat)
        if not changed:
            break

    seg = _finalize(labels, features, compactness, tuple(trace))
    if connectivity:
        seg = enforce_connectivity(seg)
    return seg


def _finalize(
    labels: np.ndarray,
    features: Grid,
    compactness: float,
    trace: tuple[tuple[float, float], ...] = (),
) -> Segmentation:
    """Compact label ids, preserving the relative order of surviving ids."""
    uniq = np.unique(labels)
    remap = np.full(int(uniq.max()) + 1, -1, dtype=np.int32)
    remap[uniq] = np.arange(len(uniq), dtype=np.int32)
    new_labels = remap[labels]
    n = len(uniq)
    feats = features.data.astype(np.float64)
    cpos, cfeat = _centers_from_labels(new_labels, feats, n)
    centers = tuple(
        PatchCenter(x=cpos[k, 0], y=cpos[k, 1], mean_feature=cfeat[k].copy())
        for k in range(n)
    )
    new_labels.flags.writeable = False
    return Segmentation(
        labels=new_labels,
        n_patches=n,
        centers=centers,
        compactness=compactness,
        features=features,
        objective_trace=trace,
    )


def enforce_connectivity(seg: Segmentation) -> Segmentation:
    """Make every patch 4-connected.

    Each label's largest component keeps the label. Stray components smaller
    than (H*W / n_patches) / 4 are absorbed into their largest 4-adjacent
    component; larger strays become patches of their own.
    """
    h, w = seg.labels.shape
    min_size = (h * w / seg.n_patches) / 4.0
    labels = np.array(seg.labels, dtype=np.int32)

    for _ in range(h * w):  # each pass strictly reduces component count
        comp, comp_sizes, comp_label = _components(labels)
        n_comps = len(comp_sizes)
        main = _main_components(comp, comp_label, comp_sizes, labels)
        small = [
            c
            for c in range(n_comps)
            if c not in main and comp_sizes[c] < min_size
        ]
        if not small:
            break
        for c in small:
            target = _largest_adjacent(comp, c, comp_sizes)
            if target is None:
                continue
            labels[comp == c] = comp_label[target]
        # Re-run: merges may have created new adjacency or joined strays.
    else:
        raise AssertionError("connectivity enforcement failed to converge")

    # Surviving stray components (>= min_size) get fresh label ids.
    comp, comp_sizes, comp_label = _components(labels)
    main = _main_components(comp, comp_label, comp_sizes, labels)
    next_id = int(labels.max()) + 1
    for c in range(len(comp_sizes)):
        if c not in main:
            labels[comp == c] = next_id
            next_id += 1
    return _finalize(labels, seg.features, seg.compactness, seg.objective_trace)


def _components(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """4-connected components of the label map, component ids 0-based."""
    comp = np.full(labels.shape, -1, dtype=np.int32)
    sizes: list[int] = []
    owners: list[int] = []
    offset = 0
    for lab in np.unique(labels):
        mask = labels == lab
        cc, ncc = ndimage.label(mask, structure=_FOUR_CONNECTED)
        comp[mask] = cc[mask] + offset - 1
        counts = np.bincount(cc[mask])[1:]
        sizes.extend(int(s) for s in counts)
        owners.extend(int(lab) for _ in range(ncc))
        offset += ncc
    return comp, np.asarray(sizes), np.asarray(owners)


def _main_components(
    comp: np.ndarray,
    comp_label: np.ndarray,
    comp_sizes: np.ndarray,
    labels: np.ndarray,
) -> set[int]:
    """Largest component of each label (ties to lowest component id)."""
    main: dict[int, int] = {}
    for c, lab in enumerate(comp_label):
        cur = main.get(int(lab))
        if cur is None or comp_sizes[c] > comp_sizes[cur]:
            main[int(lab)] = c
    return set(main.values())


def _largest_adjacent(
    comp: np.ndarray, c: int, comp_sizes: np.ndarray
) -> int | None:
    mask = comp == c
    grown = ndimage.binary_dilation(mask, structure=_FOUR_CONNECTED)
    neighbors = np.unique(comp[grown & ~mask])
    neighbors = neighbors[neighbors != c]
    if len(neighbors) == 0:
        return None
    return int(neighbors[np.argmax(comp_sizes[neighbors])])


def region_of(seg: Segmentation, p: Point) -> np.ndarray:
    """Boolean mask of every pixel sharing the patch containing ``p``.

    Continuous coordinates round to the nearest pixel, ties half away
    from zero.
    """
    h, w = seg.labels.shape
    if not (0 <= p.x <= w - 1 and 0 <= p.y <= h - 1):
        raise BoundsError(
            f"point (x={p.x}, y={p.y}) outside grid [0, {w - 1}] x [0, {h - 1}]"
        )
    ix = int(np.floor(p.x + 0.5))
    iy = int(np.floor(p.y + 0.5))
    return seg.labels == seg.labels[iy, ix]


def relabeled(seg: Segmentation, perm: np.ndarray) -> Segmentation:
    """Apply a label permutation; regions are unchanged as pixel sets."""
    perm = np.asarray(perm, dtype=np.int32)
    if sorted(perm.tolist()) != list(range(seg.n_patches)):
        raise ParameterError("perm must be a permutation of [0, n_patches)")
    labels = perm[seg.labels]
    labels.flags.writeable = False
    inv = np.argsort(perm)
    return replace(
        seg, labels=labels, centers=tuple(seg.centers[i] for i in inv)
    )


def labels_to_grid(seg: Segmentation) -> Grid:
    """Label map as a 1-channel grid (labels stored as reals)."""
    return Grid.from_array(seg.labels.astype(np.float32)[:, :, None])


def write_labels_dft1(seg: Segmentation, path) -> None:
    write_dft1(labels_to_grid(seg), path)


def write_labels_png(seg: Segmentation, path) -> None:
    """Label visualization with a fixed-seed random palette."""
    palette = np.random.default_rng(0).integers(
        40, 256, size=(seg.n_patches, 3), dtype=np.uint8
    )
    Image.fromarray(palette[seg.labels], mode="RGB").save(path, format="PNG")
