import numpy as np
import pytest

from dragforge.errors import BoundsError, DataError, FormatError, ShapeError
from dragforge.grid import (
    Grid,
    Point,
    bilinear_sample,
    bilinear_sample_many,
    load_grid,
    read_dft1,
    read_npy,
    scatter_bilinear,
    write_dft1,
    write_npy,
)
from helpers import bilinear_oracle


@pytest.fixture
def quad():
    return Grid.from_array(np.array([[1.0, 2.0], [3.0, 4.0]]))


class TestGridInvariants:
    def test_rejects_non_finite(self):
        bad = np.ones((2, 2, 1), dtype=np.float32)
        bad[1, 0, 0] = np.nan
        with pytest.raises(DataError, match=r"y=1, x=0"):
            Grid(bad)

    def test_rejects_bad_rank(self):
        with pytest.raises(ShapeError):
            Grid(np.zeros((3, 3), dtype=np.float32))

    def test_data_is_frozen(self, quad):
        with pytest.raises(ValueError):
            quad.data[0, 0, 0] = 9.0

    def test_from_array_copies(self):
        src = np.zeros((2, 2, 1), dtype=np.float32)
        g = Grid.from_array(src)
        src[0, 0, 0] = 5.0
        assert g.data[0, 0, 0] == 0.0


class TestBilinearSample:
    def test_integer_coordinate_identity(self, quad):
        assert bilinear_sample(quad, Point(0, 0)) == pytest.approx([1.0])
        assert bilinear_sample(quad, Point(1, 0)) == pytest.approx([2.0])
        assert bilinear_sample(quad, Point(0, 1)) == pytest.approx([3.0])

    def test_center_is_mean_of_corners(self, quad):
        assert bilinear_sample(quad, Point(0.5, 0.5)) == pytest.approx([2.5])

    def test_random_grid_matches_oracle(self):
        rng = np.random.default_rng(7)
        g = Grid.from_array(rng.normal(size=(4, 4, 3)))
        got = bilinear_sample(g, Point(1.25, 2.75))
        want = bilinear_oracle(g.data, 1.25, 2.75)
        assert got == pytest.approx(want, rel=1e-6)

    def test_out_of_bounds_names_coordinate(self, quad):
        with pytest.raises(BoundsError, match=r"x=1\.5"):
            bilinear_sample(quad, Point(1.5, 0.0))
        with pytest.raises(BoundsError, match=r"y=-0\.1"):
            bilinear_sample(quad, Point(0.0, -0.1))

    def test_lipschitz_continuity(self):
        rng = np.random.default_rng(3)
        g = Grid.from_array(rng.normal(size=(6, 7, 2)))
        d = g.data.astype(np.float64)
        lx = np.abs(np.diff(d, axis=1)).max()
        ly = np.abs(np.diff(d, axis=0)).max()
        lip = lx + ly
        for _ in range(50):
            x = rng.uniform(0.2, 5.8)
            y = rng.uniform(0.2, 4.8)
            delta = rng.uniform(-0.1, 0.1, size=2)
            a = bilinear_sample(g, Point(x, y))
            b = bilinear_sample(g, Point(x + delta[0], y + delta[1]))
            assert np.abs(a - b).max() <= lip * np.abs(delta).sum() + 1e-9

    def test_scatter_is_adjoint_of_sample(self):
        rng = np.random.default_rng(11)
        data = rng.normal(size=(5, 6, 2))
        xs = rng.uniform(0, 5, size=8)
        ys = rng.uniform(0, 4, size=8)
        vals = rng.normal(size=(8, 2))
        # <sample(data), vals> == <data, scatter(vals)>
        lhs = float(np.sum(bilinear_sample_many(data, xs, ys) * vals))
        rhs = float(np.sum(data * scatter_bilinear(data.shape, xs, ys, vals)))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestFileFormats:
    def test_dft1_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        g = Grid.from_array(rng.normal(size=(3, 5, 2)))
        p = tmp_path / "g.dft1"
        write_dft1(g, p)
        back = read_dft1(p)
        assert np.array_equal(back.data, g.data)

    def test_dft1_rejects_bad_magic(self, tmp_path):
        p = tmp_path / "bad.dft1"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError, match="magic"):
            read_dft1(p)

    def test_dft1_rejects_truncation(self, tmp_path):
        g = Grid.zeros(2, 2, 1)
        p = tmp_path / "g.dft1"
        write_dft1(g, p)
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(FormatError, match="expected"):
            read_dft1(p)

    def test_npy_roundtrip_and_numpy_interop(self, tmp_path):
        rng = np.random.default_rng(1)
        g = Grid.from_array(rng.normal(size=(4, 3, 2)))
        p = tmp_path / "g.npy"
        write_npy(g, p)
        # numpy's own reader is the format oracle for our writer
        via_numpy = np.load(p)
        assert via_numpy.dtype == np.float32
        assert np.array_equal(via_numpy, g.data)
        # and numpy's writer is the oracle for our reader
        p2 = tmp_path / "g2.npy"
        np.save(p2, g.data)
        assert np.array_equal(read_npy(p2).data, g.data)

    def test_npy_rejects_wrong_dtype(self, tmp_path):
        p = tmp_path / "f8.npy"
        np.save(p, np.zeros((2, 2, 1), dtype=np.float64))
        with pytest.raises(FormatError, match="<f4"):
            read_npy(p)

    def test_npy_rejects_non_3d(self, tmp_path):
        p = tmp_path / "2d.npy"
        np.save(p, np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(FormatError, match="3-D"):
            read_npy(p)

    def test_npy_rejects_fortran_order(self, tmp_path):
        p = tmp_path / "f.npy"
        np.save(p, np.asfortranarray(np.zeros((2, 3, 4), dtype=np.float32)))
        with pytest.raises(FormatError, match="Fortran"):
            read_npy(p)

    def test_dimension_caps(self, tmp_path):
        import struct

        p = tmp_path / "huge.dft1"
        p.write_bytes(b"DFT1" + struct.pack("<III", 4096, 4, 1) + b"\x00" * 16)
        with pytest.raises(FormatError, match="limits"):
            read_dft1(p)

    def test_load_grid_sniffs_format(self, tmp_path):
        g = Grid.from_array(np.arange(6, dtype=np.float32).reshape(1, 2, 3))
        d = tmp_path / "a.dft1"
        n = tmp_path / "a.npy"
        write_dft1(g, d)
        write_npy(g, n)
        assert np.array_equal(load_grid(d).data, g.data)
        assert np.array_equal(load_grid(n).data, g.data)
        bad = tmp_path / "junk.bin"
        bad.write_bytes(b"garbage")
        with pytest.raises(FormatError):
            load_grid(bad)
