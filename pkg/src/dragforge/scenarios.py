"""Synthetic desk-scale scenes used by the shipped configs and the tests.

Both scenes place a movable feature blob inside a horizontal corridor whose
segmentation features make it one superpixel, so the semantic regions track
cleanly. The two-material scene adds a high-frequency texture strip right
above the corridor whose values are confusable with the blob's, which is
exactly what breaks fixed-square tracking and supervision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import AnalyticBumpField
from .grid import Grid, write_dft1

GRID_SIZE = 64
BUMP_AMPLITUDE = 4.0
BUMP_SIGMA = 2.0
TRAP_VALUE = 3.5

CORRIDOR_ROWS = (30, 36)
CORRIDOR_COLS = (22, 42)
BAND_ROWS = (28, 29)
BAND_COLS = (16, 49)


@dataclass(frozen=True)
class Scenario:
    name: str
    latent: Grid
    seg_features: Grid
    field: AnalyticBumpField
    background: Grid | None
    pairs: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    segment: dict
    drag: dict

    def field_config(self, background_file: str | None = None) -> dict:
        cfg = {
            "kind": "analytic_bump",
            "amplitude": self.field.amplitude,
            "sigma": self.field.sigma,
        }
        if background_file is not None:
            cfg["background_file"] = background_file
        return cfg


def _corridor_features(rows: tuple[int, int], cols: tuple[int, int]) -> Grid:
    f = np.zeros((GRID_SIZE, GRID_SIZE, 2), dtype=np.float32)
    f[rows[0] : rows[1] + 1, cols[0] : cols[1] + 1, 0] = 5.0
    return Grid(f)


def uniform_grid_segmentation(
    height: int = GRID_SIZE, width: int = GRID_SIZE, rows: int = 4, cols: int = 4
):
    """Regular rows x cols cell partition as a ready-made segmentation."""
    from .superpixel import _finalize

    ys = np.minimum(np.arange(height) * rows // height, rows - 1)
    xs = np.minimum(np.arange(width) * cols // width, cols - 1)
    labels = (ys[:, None] * cols + xs[None, :]).astype(np.int32)
    return _finalize(labels, Grid.zeros(height, width, 1), 10.0)


def bump_drag_scenario() -> Scenario:
    """8 px drag of the blob along a one-patch corridor; converges to
    within a pixel or two of the target."""
    handle, target = (26.0, 32.0), (34.0, 32.0)
    field = AnalyticBumpField(amplitude=BUMP_AMPLITUDE, sigma=BUMP_SIGMA)
    return Scenario(
        name="bump_drag",
        latent=AnalyticBumpField.encode_center(GRID_SIZE, GRID_SIZE, *handle),
        seg_features=_corridor_features((28, 36), CORRIDOR_COLS),
        field=field,
        background=None,
        pairs=((handle, target),),
        segment={"n_segments": 9, "compactness": 0.5, "max_iters": 10},
        drag={
            "n_steps": 16,
            "max_updates": 300,
            "learning_rate": 0.01,
            "stop_radius": 1.0,
            "background_weight": 0.1,
            "region_mode": "semantic",
            "square_radius": 3,
        },
    )


def two_material_scenario(seed: int = 0) -> Scenario:
    """Blob corridor with an adjacent confusable texture strip.

    Per-seed jitter moves the drag row, start column, and texture phase.
    Fixed-square regions overlap the strip and derail; semantic regions
    stay inside the corridor patch.
    """
    rng = np.random.default_rng(seed)
    row = float(rng.integers(31, 33))
    x0 = float(rng.integers(23, 26))
    phase = int(rng.integers(0, 2))
    drag_len = 14.0

    bg = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.float64)
    r0, r1 = BAND_ROWS
    c0, c1 = BAND_COLS
    ys, xs = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
    bg[r0 : r1 + 1, c0 : c1 + 1] = np.where(
        (ys + xs + phase) % 2 == 0, TRAP_VALUE, 0.0
    )
    field = AnalyticBumpField(
        amplitude=BUMP_AMPLITUDE, sigma=BUMP_SIGMA, background=bg
    )
    handle, target = (x0, row), (x0 + drag_len, row)
    return Scenario(
        name=f"two_material_seed{seed}",
        latent=AnalyticBumpField.encode_center(GRID_SIZE, GRID_SIZE, *handle),
        seg_features=_corridor_features(CORRIDOR_ROWS, CORRIDOR_COLS),
        field=field,
        background=Grid.from_array(bg[:, :, None]),
        pairs=((handle, target),),
        segment={"n_segments": 9, "compactness": 0.5, "max_iters": 10},
        drag={
            "n_steps": 16,
            "max_updates": 300,
            "learning_rate": 0.01,
            "stop_radius": 1.0,
            "background_weight": 0.1,
            "region_mode": "semantic",
            "square_radius": 3,
        },
    )


def write_scenario(scn: Scenario, out_dir: str | Path) -> Path:
    """Write the scenario's input files plus a runnable config; returns the
    config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dft1(scn.latent, out / "latent.dft1")
    write_dft1(scn.seg_features, out / "seg_features.dft1")
    background_file = None
    if scn.background is not None:
        background_file = "background.dft1"
        write_dft1(scn.background, out / background_file)
    config = {
        "inputs": {
            "latent": "latent.dft1",
            "features": {"file": "seg_features.dft1"},
        },
        "field": scn.field_config(background_file),
        "segment": dict(scn.segment),
        "pairs": [
            {"handle": list(h), "target": list(t)} for h, t in scn.pairs
        ],
        "mask": {"dilation": 0},
        "drag": dict(scn.drag),
        "sample": {"enabled": False},
        "seed": 0,
    }
    path = out / "config.json"
    path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return path
