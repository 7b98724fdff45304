"""Dense H×W×C float32 grids, sub-pixel sampling, and grid file formats.

A :class:`Grid` is the carrier for latents, feature maps, and masks. Data is
stored row-major as (y, x, channel) and frozen after construction so grids can
be shared freely between threads.

Two on-disk formats are supported:

* "DFT1" — magic bytes ``DFT1``, then little-endian u32 height, width,
  channels, then ``h*w*c`` little-endian float32 values row-major.
* NPY v1.0 restricted to dtype ``<f4``, C order, 3-D shape.
"""

from __future__ import annotations

import ast
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import BoundsError, DataError, FormatError, ShapeError

# Hard cap on grid dimensions accepted from files or uploads.
MAX_DIM = 2048
MAX_CHANNELS = 256

_DFT1_MAGIC = b"DFT1"
_NPY_MAGIC = b"\x93NUMPY"


class Point(NamedTuple):
    """Continuous pixel coordinate; (0, 0) is the top-left pixel center."""

    x: float
    y: float

    def dist(self, other: "Point") -> float:
        return float(np.hypot(self.x - other.x, self.y - other.y))


@dataclass(frozen=True)
class Grid:
    """Immutable H×W×C float32 array with validated, finite entries."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if d.ndim != 3:
            raise ShapeError(f"grid must be 3-D (h, w, c), got shape {d.shape}")
        h, w, c = d.shape
        if h < 1 or w < 1 or c < 1:
            raise ShapeError(f"grid dims must be >= 1, got {d.shape}")
        if d.dtype != np.float32:
            raise ShapeError(f"grid dtype must be float32, got {d.dtype}")
        if not np.isfinite(d).all():
            bad = np.argwhere(~np.isfinite(d))[0]
            raise DataError(
                f"non-finite value at (y={bad[0]}, x={bad[1]}, c={bad[2]})"
            )
        d.flags.writeable = False

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @staticmethod
    def from_array(arr: np.ndarray) -> "Grid":
        """Copy ``arr`` into a fresh float32 C-order grid."""
        a = np.asarray(arr)
        if a.ndim == 2:
            a = a[:, :, None]
        return Grid(np.array(a, dtype=np.float32, order="C", copy=True))

    @staticmethod
    def zeros(height: int, width: int, channels: int = 1) -> "Grid":
        return Grid(np.zeros((height, width, channels), dtype=np.float32))

    @staticmethod
    def full(height: int, width: int, channels: int, value: float) -> "Grid":
        return Grid(np.full((height, width, channels), value, dtype=np.float32))

    def contains(self, p: Point) -> bool:
        return 0.0 <= p.x <= self.width - 1 and 0.0 <= p.y <= self.height - 1

    def require_inside(self, p: Point) -> None:
        if not self.contains(p):
            raise BoundsError(
                f"point (x={p.x}, y={p.y}) outside grid "
                f"[0, {self.width - 1}] x [0, {self.height - 1}]"
            )


def bilinear_sample(grid: Grid, q: Point) -> np.ndarray:
    """Bilinearly interpolated feature vector at a sub-pixel position.

    Exact at integer coordinates. Out-of-bounds positions raise
    :class:`BoundsError` rather than clamping, so drifting points are caught
    instead of silently pinned to the border.
    """
    grid.require_inside(q)
    out = bilinear_sample_many(
        grid.data, np.asarray([q.x], dtype=np.float64), np.asarray([q.y])
    )
    return out[0]


def bilinear_sample_many(
    data: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    """Vectorized bilinear sampling; returns an (n, channels) float64 array.

    Callers are responsible for bounds checking; coordinates must satisfy
    0 <= x <= w-1 and 0 <= y <= h-1.
    """
    h, w, _ = data.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    d = data.astype(np.float64, copy=False)
    top = d[y0, x0] * (1.0 - fx)[:, None] + d[y0, x1] * fx[:, None]
    bot = d[y1, x0] * (1.0 - fx)[:, None] + d[y1, x1] * fx[:, None]
    return top * (1.0 - fy)[:, None] + bot * fy[:, None]


def scatter_bilinear(
    shape: tuple[int, int, int],
    xs: np.ndarray,
    ys: np.ndarray,
    values: np.ndarray,
) -> np.ndarray:
    """Adjoint of :func:`bilinear_sample_many`.

    Distributes each (channels,) row of ``values`` onto the 4 integer
    neighbors of its position with bilinear weights. Returns a float64
    array of ``shape``.
    """
    h, w, c = shape
    out = np.zeros((h, w, c), dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    np.add.at(out, (y0, x0), values * (1.0 - fx) * (1.0 - fy))
    np.add.at(out, (y0, x1), values * fx * (1.0 - fy))
    np.add.at(out, (y1, x0), values * (1.0 - fx) * fy)
    np.add.at(out, (y1, x1), values * fx * fy)
    return out


def _check_dims(h: int, w: int, c: int, source: str) -> None:
    if not (1 <= h <= MAX_DIM and 1 <= w <= MAX_DIM and 1 <= c <= MAX_CHANNELS):
        raise FormatError(
            f"{source}: dimensions {h}x{w}x{c} exceed limits "
            f"{MAX_DIM}x{MAX_DIM}x{MAX_CHANNELS}"
        )


def write_dft1(grid: Grid, path: str | Path) -> None:
    h, w, c = grid.shape
    with open(path, "wb") as f:
        f.write(_DFT1_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(np.ascontiguousarray(grid.data, dtype="<f4").tobytes())


def read_dft1(data_or_path: bytes | str | Path) -> Grid:
    if isinstance(data_or_path, (str, Path)):
        raw = Path(data_or_path).read_bytes()
        source = str(data_or_path)
    else:
        raw = data_or_path
        source = "<bytes>"
    if len(raw) < 16 or raw[:4] != _DFT1_MAGIC:
        raise FormatError(f"{source}: missing DFT1 magic bytes")
    h, w, c = struct.unpack("<III", raw[4:16])
    _check_dims(h, w, c, source)
    expected = 16 + 4 * h * w * c
    if len(raw) != expected:
        raise FormatError(
            f"{source}: expected {expected} bytes for {h}x{w}x{c}, got {len(raw)}"
        )
    arr = np.frombuffer(raw, dtype="<f4", offset=16).reshape(h, w, c)
    if not np.isfinite(arr).all():
        raise DataError(f"{source}: file contains non-finite values")
    return Grid(arr.astype(np.float32))


def write_npy(grid: Grid, path: str | Path) -> None:
    """NPY v1.0, dtype <f4, C order, 3-D shape."""
    h, w, c = grid.shape
    header = f"{{'descr': '<f4', 'fortran_order': False, 'shape': ({h}, {w}, {c}), }}"
    # Pad so magic + version + length field + header is a multiple of 64.
    base = len(_NPY_MAGIC) + 2 + 2
    pad = 64 - (base + len(header) + 1) % 64
    header = header + " " * pad + "\n"
    with open(path, "wb") as f:
        f.write(_NPY_MAGIC)
        f.write(bytes([1, 0]))
        f.write(struct.pack("<H", len(header)))
        f.write(header.encode("latin1"))
        f.write(np.ascontiguousarray(grid.data, dtype="<f4").tobytes())


def read_npy(data_or_path: bytes | str | Path) -> Grid:
    if isinstance(data_or_path, (str, Path)):
        raw = Path(data_or_path).read_bytes()
        source = str(data_or_path)
    else:
        raw = data_or_path
        source = "<bytes>"
    if len(raw) < 10 or raw[:6] != _NPY_MAGIC:
        raise FormatError(f"{source}: missing NPY magic bytes")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{source}: only NPY v1.0 supported, got v{major}.{minor}")
    (hlen,) = struct.unpack("<H", raw[8:10])
    header = raw[10 : 10 + hlen].decode("latin1")
    try:
        meta = ast.literal_eval(header)
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{source}: unparseable NPY header") from exc
    if meta.get("descr") != "<f4":
        raise FormatError(f"{source}: dtype must be '<f4', got {meta.get('descr')!r}")
    if meta.get("fortran_order"):
        raise FormatError(f"{source}: Fortran-order arrays not supported")
    shape = meta.get("shape")
    if not (isinstance(shape, tuple) and len(shape) == 3):
        raise FormatError(f"{source}: shape must be 3-D, got {shape!r}")
    h, w, c = (int(s) for s in shape)
    _check_dims(h, w, c, source)
    start = 10 + hlen
    expected = start + 4 * h * w * c
    if len(raw) != expected:
        raise FormatError(
            f"{source}: expected {expected} bytes for shape {shape}, got {len(raw)}"
        )
    arr = np.frombuffer(raw, dtype="<f4", offset=start).reshape(h, w, c)
    if not np.isfinite(arr).all():
        raise DataError(f"{source}: file contains non-finite values")
    return Grid(arr.astype(np.float32))


def load_grid(data_or_path: bytes | str | Path) -> Grid:
    """Load a grid from either supported format, sniffing the magic bytes."""
    if isinstance(data_or_path, (str, Path)):
        head = Path(data_or_path).open("rb").read(6)
    else:
        head = data_or_path[:6]
    if head[:4] == _DFT1_MAGIC:
        return read_dft1(data_or_path)
    if head == _NPY_MAGIC:
        return read_npy(data_or_path)
    raise FormatError("unrecognized grid file format (expected DFT1 or NPY v1.0)")
