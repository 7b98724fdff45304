"""Differentiable feature fields mapping a latent grid to a feature grid.

Each field ships a hand-derived adjoint (no autodiff): ``adjoint(z, ct)``
returns the gradient of ``<forward(z), ct>`` with respect to ``z``. Four
kinds are provided:

* ``identity`` — features are the latent itself.
* ``linear_conv`` — fixed spatial correlation with a (kh, kw, c_in, c_out)
  kernel, zero-padded to preserve spatial dims.
* ``analytic_bump`` — a Gaussian blob of fixed amplitude and width whose
  center coordinates are read from two latent cells, optionally over a
  static background map. The feature map is a smooth function of the
  latent, which makes drag behavior fully verifiable.
* ``tabulated`` — per-pixel bilinear lookup of two latent channels into a
  stored 2-D table of feature vectors; piecewise-linear and loadable from
  the grid file formats.

All forwards are deterministic and side-effect free.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import ConfigError, ShapeError
from .grid import Grid, load_grid


class FeatureField(Protocol):
    kind: str

    def forward(self, z: Grid) -> Grid: ...

    def adjoint(self, z: Grid, cotangent: Grid) -> Grid: ...


def field_forward(field: FeatureField, z: Grid) -> Grid:
    """Evaluate the feature map F(z)."""
    return field.forward(z)


def field_adjoint(field: FeatureField, z: Grid, cotangent: Grid) -> Grid:
    """Gradient of <forward(z), cotangent> with respect to z."""
    out_shape = field.forward(z).shape
    if cotangent.shape != out_shape:
        raise ShapeError(
            f"cotangent shape {cotangent.shape} != feature shape {out_shape}"
        )
    return field.adjoint(z, cotangent)


class IdentityField:
    kind = "identity"

    def forward(self, z: Grid) -> Grid:
        return Grid.from_array(z.data)

    def adjoint(self, z: Grid, cotangent: Grid) -> Grid:
        if cotangent.shape != z.shape:
            raise ShapeError(
                f"cotangent shape {cotangent.shape} != latent shape {z.shape}"
            )
        return Grid.from_array(cotangent.data)


def _correlate(data: np.ndarray, kernel: np.ndarray, oy: int, ox: int) -> np.ndarray:
    """out[y, x, co] = sum_{dy,dx,ci} K[dy,dx,ci,co] * pad(data)[y+dy, x+dx, ci]."""
    kh, kw, ci, co = kernel.shape
    h, w, _ = data.shape
    pad = np.zeros((h + kh - 1, w + kw - 1, ci), dtype=np.float64)
    pad[oy : oy + h, ox : ox + w] = data
    out = np.zeros((h, w, co), dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            out += pad[dy : dy + h, dx : dx + w] @ kernel[dy, dx]
    return out


class LinearConvField:
    """Fixed linear convolution (correlation) with zero padding."""

    kind = "linear_conv"

    def __init__(self, kernel: np.ndarray):
        k = np.asarray(kernel, dtype=np.float64)
        if k.ndim == 2:
            k = k[:, :, None, None]
        if k.ndim != 4:
            raise ShapeError(
                f"kernel must be (kh, kw, c_in, c_out), got shape {k.shape}"
            )
        self.kernel = k
        self.in_channels = k.shape[2]
        self.out_channels = k.shape[3]
        self._oy = k.shape[0] // 2
        self._ox = k.shape[1] // 2

    def forward(self, z: Grid) -> Grid:
        if z.channels != self.in_channels:
            raise ShapeError(
                f"latent has {z.channels} channels, kernel expects {self.in_channels}"
            )
        return Grid.from_array(_correlate(z.data, self.kernel, self._oy, self._ox))

    def adjoint(self, z: Grid, cotangent: Grid) -> Grid:
        kh, kw = self.kernel.shape[:2]
        # Spatially flipped kernel with in/out channels swapped.
        kt = self.kernel[::-1, ::-1].transpose(0, 1, 3, 2)
        grad = _correlate(
            cotangent.data, kt, kh - 1 - self._oy, kw - 1 - self._ox
        )
        return Grid.from_array(grad)


class AnalyticBumpField:
    """Gaussian blob whose center is encoded in the latent.

    The latent cells (y=0, x=0, c=0) and (y=0, x=1, c=0) hold the blob's
    (cx, cy) in pixel coordinates. forward() renders
    ``amplitude * exp(-((x-cx)^2 + (y-cy)^2) / (2 sigma^2))`` on channel 0,
    plus an optional static background. Only the two encoding cells carry
    gradient.
    """

    kind = "analytic_bump"

    def __init__(
        self,
        amplitude: float,
        sigma: float,
        background: np.ndarray | None = None,
    ):
        if sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {sigma}")
        self.amplitude = float(amplitude)
        self.sigma = float(sigma)
        if background is not None:
            background = np.asarray(background, dtype=np.float64)
            if background.ndim == 3:
                if background.shape[2] != 1:
                    raise ShapeError("background must have a single channel")
                background = background[:, :, 0]
        self.background = background

    def center_of(self, z: Grid) -> tuple[float, float]:
        return float(z.data[0, 0, 0]), float(z.data[0, 1, 0])

    @staticmethod
    def encode_center(
        height: int, width: int, cx: float, cy: float, channels: int = 1
    ) -> Grid:
        """Latent whose bump center is (cx, cy); all other cells zero."""
        data = np.zeros((height, width, channels), dtype=np.float32)
        data[0, 0, 0] = cx
        data[0, 1, 0] = cy
        return Grid(data)

    def _check(self, z: Grid) -> None:
        if z.width < 2:
            raise ShapeError("bump field needs latent width >= 2 to encode center")
        if self.background is not None and self.background.shape != (
            z.height,
            z.width,
        ):
            raise ShapeError(
                f"background shape {self.background.shape} != latent "
                f"spatial dims ({z.height}, {z.width})"
            )

    def _bump(self, z: Grid) -> np.ndarray:
        cx, cy = self.center_of(z)
        ys, xs = np.mgrid[0 : z.height, 0 : z.width]
        r2 = (xs - cx) ** 2 + (ys - cy) ** 2
        return self.amplitude * np.exp(-r2 / (2.0 * self.sigma**2))

    def forward(self, z: Grid) -> Grid:
        self._check(z)
        out = self._bump(z)
        if self.background is not None:
            out = out + self.background
        return Grid.from_array(out[:, :, None])

    def adjoint(self, z: Grid, cotangent: Grid) -> Grid:
        self._check(z)
        cx, cy = self.center_of(z)
        ys, xs = np.mgrid[0 : z.height, 0 : z.width]
        bump = self._bump(z)
        ct = cotangent.data[:, :, 0].astype(np.float64)
        inv_s2 = 1.0 / self.sigma**2
        grad = np.zeros(z.shape, dtype=np.float64)
        grad[0, 0, 0] = np.sum(ct * bump * (xs - cx)) * inv_s2
        grad[0, 1, 0] = np.sum(ct * bump * (ys - cy)) * inv_s2
        return Grid.from_array(grad)


class TabulatedField:
    """Per-pixel bilinear lookup into a stored feature table.

    Latent channel 0 selects the table column, channel 1 the table row;
    both are clamped to the table extent. The lookup is piecewise linear,
    so the adjoint is exact away from integer table coordinates.
    """

    kind = "tabulated"

    def __init__(self, table: np.ndarray):
        t = np.asarray(table, dtype=np.float64)
        if t.ndim != 3 or t.shape[0] < 2 or t.shape[1] < 2:
            raise ShapeError(
                f"table must be (rows >= 2, cols >= 2, channels), got {t.shape}"
            )
        self.table = t
        self.out_channels = t.shape[2]

    @staticmethod
    def load(path: str | Path) -> "TabulatedField":
        return TabulatedField(load_grid(path).data)

    def _check(self, z: Grid) -> None:
        if z.channels < 2:
            raise ShapeError("tabulated field needs latent channels >= 2")

    def _coords(self, z: Grid) -> tuple[np.ndarray, np.ndarray]:
        th, tw, _ = self.table.shape
        u = np.clip(z.data[:, :, 0].astype(np.float64), 0.0, tw - 1.0)
        v = np.clip(z.data[:, :, 1].astype(np.float64), 0.0, th - 1.0)
        return u, v

    def forward(self, z: Grid) -> Grid:
        self._check(z)
        u, v = self._coords(z)
        th, tw, c = self.table.shape
        u0 = np.minimum(np.floor(u).astype(np.intp), tw - 2)
        v0 = np.minimum(np.floor(v).astype(np.intp), th - 2)
        fu = (u - u0)[:, :, None]
        fv = (v - v0)[:, :, None]
        t = self.table
        top = t[v0, u0] * (1 - fu) + t[v0, u0 + 1] * fu
        bot = t[v0 + 1, u0] * (1 - fu) + t[v0 + 1, u0 + 1] * fu
        return Grid.from_array(top * (1 - fv) + bot * fv)

    def adjoint(self, z: Grid, cotangent: Grid) -> Grid:
        self._check(z)
        u, v = self._coords(z)
        th, tw, _ = self.table.shape
        u0 = np.minimum(np.floor(u).astype(np.intp), tw - 2)
        v0 = np.minimum(np.floor(v).astype(np.intp), th - 2)
        fu = (u - u0)[:, :, None]
        fv = (v - v0)[:, :, None]
        t = self.table
        # d(lookup)/du and /dv from the bilinear cell differences.
        du = (t[v0, u0 + 1] - t[v0, u0]) * (1 - fv) + (
            t[v0 + 1, u0 + 1] - t[v0 + 1, u0]
        ) * fv
        dv = (t[v0 + 1, u0] - t[v0, u0]) * (1 - fu) + (
            t[v0 + 1, u0 + 1] - t[v0, u0 + 1]
        ) * fu
        # Clamped coordinates carry no gradient.
        raw_u = z.data[:, :, 0].astype(np.float64)
        raw_v = z.data[:, :, 1].astype(np.float64)
        live_u = (raw_u > 0.0) & (raw_u < tw - 1.0)
        live_v = (raw_v > 0.0) & (raw_v < th - 1.0)
        ct = cotangent.data.astype(np.float64)
        grad = np.zeros(z.shape, dtype=np.float64)
        grad[:, :, 0] = np.sum(ct * du, axis=2) * live_u
        grad[:, :, 1] = np.sum(ct * dv, axis=2) * live_v
        return Grid.from_array(grad)


def field_from_config(cfg: dict, base_dir: str | Path = ".") -> FeatureField:
    """Build a field from a JSON-style config mapping."""
    kind = cfg.get("kind")
    base = Path(base_dir)
    if kind == "identity":
        return IdentityField()
    if kind == "linear_conv":
        if "kernel_file" in cfg:
            kernel = load_grid(base / cfg["kernel_file"]).data
            kernel = kernel[:, :, :, None] if kernel.ndim == 3 else kernel
        elif "kernel" in cfg:
            kernel = np.asarray(cfg["kernel"], dtype=np.float64)
        else:
            raise ConfigError("linear_conv field needs 'kernel' or 'kernel_file'")
        return LinearConvField(kernel)
    if kind == "analytic_bump":
        background = None
        if cfg.get("background_file"):
            background = load_grid(base / cfg["background_file"]).data
        return AnalyticBumpField(
            amplitude=float(cfg.get("amplitude", 1.0)),
            sigma=float(cfg.get("sigma", 2.0)),
            background=background,
        )
    if kind == "tabulated":
        if "table_file" not in cfg:
            raise ConfigError("tabulated field needs 'table_file'")
        return TabulatedField.load(base / cfg["table_file"])
    raise ConfigError(f"unknown field kind {kind!r}")
