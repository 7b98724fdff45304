import math

import numpy as np
import pytest

from dragforge.errors import BoundsError, ParameterError
from dragforge.grid import Grid, Point
from dragforge.superpixel import (
    enforce_connectivity,
    region_of,
    relabeled,
    slic_segment,
    write_labels_png,
)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def reference_slic(feats, n_segments, compactness, max_iters=200):
    """Straightforward loop implementation of the same clustering.

    Same conventions as the production code (grid seeding, cell-mean
    initial features, 2S-wide windows, strict-improvement ties), written
    as plainly as possible.
    """
    h, w, c = feats.shape
    spacing = math.sqrt(h * w / n_segments)
    weight = compactness / spacing
    rows = max(1, round(math.sqrt(n_segments * h / w)))
    cols = max(1, math.ceil(n_segments / rows))
    n = rows * cols

    labels = np.zeros((h, w), dtype=int)
    for y in range(h):
        for x in range(w):
            labels[y, x] = min(y * rows // h, rows - 1) * cols + min(
                x * cols // w, cols - 1
            )
    cpos = [((j + 0.5) * w / cols, (i + 0.5) * h / rows)
            for i in range(rows) for j in range(cols)]
    cfeat = _means(labels, feats, n)

    def dist(y, x, k):
        df = 0.0
        for ch in range(c):
            df += (feats[y, x, ch] - cfeat[k][ch]) ** 2
        dx = x - cpos[k][0]
        dy = y - cpos[k][1]
        return math.sqrt(df) + weight * math.sqrt(dx * dx + dy * dy)

    reach = math.ceil(spacing)
    for _ in range(max_iters):
        best = np.array([[dist(y, x, labels[y, x]) for x in range(w)]
                         for y in range(h)])
        new = labels.copy()
        for k in range(n):
            cx, cy = cpos[k]
            for y in range(max(0, math.floor(cy) - reach),
                           min(h, math.ceil(cy) + reach + 1)):
                for x in range(max(0, math.floor(cx) - reach),
                               min(w, math.ceil(cx) + reach + 1)):
                    d = dist(y, x, k)
                    if d < best[y, x]:
                        best[y, x] = d
                        new[y, x] = k
        if (new == labels).all():
            break
        labels = new
        for k in range(n):
            pts = np.argwhere(labels == k)
            if len(pts):
                cpos[k] = (pts[:, 1].mean(), pts[:, 0].mean())
        cfeat = _means(labels, feats, n)
    return labels


def _means(labels, feats, n):
    out = []
    for k in range(n):
        mask = labels == k
        if mask.any():
            out.append(feats[mask].mean(axis=0))
        else:
            out.append(np.zeros(feats.shape[2]))
    return out


def flood_fill_components(mask):
    """Connected-component count via explicit BFS flood fill."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    count = 0
    for sy in range(h):
        for sx in range(w):
            if mask[sy, sx] and not seen[sy, sx]:
                count += 1
                stack = [(sy, sx)]
                seen[sy, sx] = True
                while stack:
                    y, x = stack.pop()
                    for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
    return count


def assert_all_connected(seg):
    for lab in range(seg.n_patches):
        mask = seg.labels == lab
        assert mask.any(), f"label {lab} is empty"
        assert flood_fill_components(mask) == 1, f"label {lab} disconnected"


def grid_partition(h, w, rows, cols):
    ys = np.minimum(np.arange(h) * rows // h, rows - 1)
    xs = np.minimum(np.arange(w) * cols // w, cols - 1)
    return ys[:, None] * cols + xs[None, :]


# ---------------------------------------------------------------------------
# slic_segment
# ---------------------------------------------------------------------------

class TestSlic:
    def test_constant_features_recover_grid_partition(self):
        feats = Grid.full(64, 64, 1, 3.0)
        seg = slic_segment(feats, n_segments=16, compactness=10.0, max_iters=10)
        assert seg.n_patches == 16
        ideal = grid_partition(64, 64, 4, 4)
        mismatched = np.argwhere(seg.labels != ideal)
        for y, x in mismatched:
            dist_to_boundary = min(x % 16, 15 - x % 16, y % 16, 15 - y % 16)
            assert dist_to_boundary <= 2, f"pixel ({y},{x}) off-grid by >2"

    def test_two_region_boundary_at_discontinuity(self):
        data = np.zeros((16, 16, 1), dtype=np.float32)
        data[:, 8:, 0] = 10.0
        seg = slic_segment(Grid(data), n_segments=2, compactness=0.5, max_iters=20)
        assert seg.n_patches == 2
        # Brute-force 2-means over (feature, position) with the same metric.
        want = reference_slic(data.astype(np.float64), 2, 0.5, max_iters=200)
        assert np.array_equal(np.unique(want), [0, 1])
        assert np.array_equal(seg.labels, want)
        for y in range(16):
            row = seg.labels[y]
            boundary = int(np.argmax(row != row[0]))
            assert abs(boundary - 8) <= 1

    def test_checkerboard_matches_reference_to_convergence(self):
        ys, xs = np.mgrid[0:8, 0:8]
        data = ((ys + xs) % 2).astype(np.float32)[:, :, None]
        seg = slic_segment(
            Grid(data), n_segments=4, compactness=10.0, max_iters=50,
            connectivity=False,
        )
        want = reference_slic(data.astype(np.float64), 4, 10.0)
        assert np.array_equal(seg.labels, want)

    def test_random_features_match_reference(self):
        rng = np.random.default_rng(8)
        data = rng.normal(size=(12, 10, 2)).astype(np.float32)
        seg = slic_segment(
            Grid(data), n_segments=6, compactness=5.0, max_iters=7,
            connectivity=False,
        )
        want = reference_slic(data.astype(np.float64), 6, 5.0, max_iters=7)
        assert np.array_equal(seg.labels, want)

    def test_parameter_errors(self):
        g = Grid.zeros(4, 4, 1)
        with pytest.raises(ParameterError, match="n_segments"):
            slic_segment(g, n_segments=17)
        with pytest.raises(ParameterError, match="compactness"):
            slic_segment(g, n_segments=4, compactness=0.0)
        with pytest.raises(ParameterError, match="max_iters"):
            slic_segment(g, n_segments=4, max_iters=0)

    def test_full_pixel_coverage(self):
        rng = np.random.default_rng(1)
        seg = slic_segment(
            Grid.from_array(rng.normal(size=(20, 24, 3))), n_segments=12
        )
        assert seg.labels.min() >= 0
        assert seg.labels.max() < seg.n_patches
        assert set(np.unique(seg.labels)) == set(range(seg.n_patches))

    def test_objective_monotone_within_assignment(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            data = rng.normal(size=(16, 16, 2)).astype(np.float32)
            seg = slic_segment(
                Grid(data), n_segments=9, compactness=8.0, max_iters=10,
                connectivity=False,
            )
            for before, after in seg.objective_trace:
                assert after <= before + 1e-9

    def test_huge_compactness_gives_grid_partition(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(32, 32, 2)).astype(np.float32)
        seg = slic_segment(Grid(data), n_segments=16, compactness=1e6)
        ideal = grid_partition(32, 32, 4, 4)
        # Exact spatial ties on cell midlines may flip; everything else
        # must recover the regular partition.
        for y, x in np.argwhere(seg.labels != ideal):
            dist_to_boundary = min(x % 8, 7 - x % 8, y % 8, 7 - y % 8)
            assert dist_to_boundary <= 1, f"pixel ({y},{x}) off-grid"


# ---------------------------------------------------------------------------
# enforce_connectivity
# ---------------------------------------------------------------------------

def seg_from_labels(labels, features=None):
    labels = np.asarray(labels, dtype=np.int32)
    h, w = labels.shape
    feats = features if features is not None else Grid.zeros(h, w, 1)
    from dragforge.superpixel import _finalize

    return _finalize(labels.copy(), feats, compactness=10.0)


class TestConnectivity:
    def test_already_connected_is_fixed_point(self):
        labels = grid_partition(12, 12, 3, 3)
        seg = seg_from_labels(labels)
        out = enforce_connectivity(seg)
        assert np.array_equal(out.labels, seg.labels)
        assert out.n_patches == seg.n_patches

    def test_single_orphan_pixel_merged(self):
        labels = np.zeros((8, 8), dtype=np.int32)
        labels[:, 4:] = 1
        labels[3, 0] = 1  # stray pixel of label 1 inside label 0
        seg = seg_from_labels(labels)
        out = enforce_connectivity(seg)
        assert out.labels[3, 0] == out.labels[3, 1]
        assert out.n_patches == 2
        assert_all_connected(out)

    def test_random_noise_passes_flood_fill_audit(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 5, size=(16, 16)).astype(np.int32)
        seg = seg_from_labels(labels)
        out = enforce_connectivity(seg)
        assert_all_connected(out)
        assert out.labels.size == seg.labels.size  # pixel count conserved

    def test_large_stray_becomes_own_patch(self):
        labels = np.zeros((12, 12), dtype=np.int32)
        labels[:, 6:] = 1
        labels[6:, :3] = 1  # 18-pixel stray of label 1, at min size (HW/n)/4
        seg = seg_from_labels(labels)
        out = enforce_connectivity(seg)
        assert_all_connected(out)
        assert out.n_patches == 3

    def test_slic_output_connected_by_default(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(24, 24, 2)).astype(np.float32)
        seg = slic_segment(Grid(data), n_segments=9, compactness=2.0)
        assert_all_connected(seg)


# ---------------------------------------------------------------------------
# region_of
# ---------------------------------------------------------------------------

class TestRegionOf:
    def test_single_label_returns_all(self):
        seg = seg_from_labels(np.zeros((6, 6), dtype=np.int32))
        assert region_of(seg, Point(2, 3)).all()

    def test_two_region_returns_half(self):
        labels = np.zeros((16, 16), dtype=np.int32)
        labels[:, 8:] = 1
        seg = seg_from_labels(labels)
        region = region_of(seg, Point(5, 10))
        assert np.array_equal(region, labels == 0)

    def test_rounding_half_away_from_zero(self):
        labels = np.arange(16, dtype=np.int32).reshape(4, 4)
        seg = seg_from_labels(labels)
        a = region_of(seg, Point(0.4, 0.6))
        b = region_of(seg, Point(0, 1))
        assert np.array_equal(a, b)
        c = region_of(seg, Point(0.5, 0.5))  # rounds up to (1, 1)
        d = region_of(seg, Point(1, 1))
        assert np.array_equal(c, d)

    def test_out_of_bounds(self):
        seg = seg_from_labels(np.zeros((4, 4), dtype=np.int32))
        with pytest.raises(BoundsError):
            region_of(seg, Point(4.0, 0.0))

    def test_relabel_invariance(self):
        rng = np.random.default_rng(6)
        data = rng.normal(size=(16, 16, 1)).astype(np.float32)
        seg = slic_segment(Grid(data), n_segments=4, compactness=5.0)
        perm = rng.permutation(seg.n_patches)
        seg2 = relabeled(seg, perm)
        p = Point(7.0, 9.0)
        assert np.array_equal(region_of(seg, p), region_of(seg2, p))


class TestExport:
    def test_png_export(self, tmp_path):
        from PIL import Image

        seg = seg_from_labels(grid_partition(8, 8, 2, 2))
        path = tmp_path / "labels.png"
        write_labels_png(seg, path)
        img = np.asarray(Image.open(path))
        assert img.shape == (8, 8, 3)
        # same label -> same color, different labels -> different colors
        assert len({tuple(img[y, x]) for y in range(8) for x in range(8)}) == 4

    def test_dft1_export_roundtrip(self, tmp_path):
        from dragforge.grid import read_dft1
        from dragforge.superpixel import write_labels_dft1

        seg = seg_from_labels(grid_partition(6, 9, 2, 3))
        path = tmp_path / "labels.dft1"
        write_labels_dft1(seg, path)
        back = read_dft1(path)
        assert np.array_equal(back.data[:, :, 0].astype(int), seg.labels)
