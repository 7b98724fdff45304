"""Editing-precision metrics and session-level reports."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dragopt import DragState, point_track
from .errors import ParameterError
from .fields import FeatureField
from .grid import Grid, Point
from .maskgen import DragInstruction, Mask


@dataclass(frozen=True)
class EvalReport:
    """Per-pair drag precision plus a feature-preservation proxy.

    ``outside_mask_l1`` is a plain mean L1 distance between the original
    and final latents outside the mask; it is not comparable to perceptual
    image-fidelity scores.
    """

    per_pair_distance: tuple[float, ...]
    mean_dist: float
    converged: bool
    updates_used: int
    relocated_points: tuple[Point, ...]
    outside_mask_l1: float

    def to_dict(self) -> dict:
        return {
            "per_pair_distance": list(self.per_pair_distance),
            "mean_distance": self.mean_dist,
            "converged": self.converged,
            "updates_used": self.updates_used,
            "relocated_points": [[p.x, p.y] for p in self.relocated_points],
            "outside_mask_l1": self.outside_mask_l1,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @staticmethod
    def csv_header() -> str:
        return "mean_distance,converged,updates_used,outside_mask_l1"

    def to_csv_row(self) -> str:
        return (
            f"{self.mean_dist},{int(self.converged)},"
            f"{self.updates_used},{self.outside_mask_l1}"
        )


def mean_distance(final_points: list[Point], targets: list[Point]) -> float:
    """Mean Euclidean distance in pixels between matched point lists."""
    if len(final_points) != len(targets):
        raise ParameterError(
            f"{len(final_points)} final points vs {len(targets)} targets"
        )
    if not final_points:
        raise ParameterError("need at least one point")
    return float(
        np.mean([p.dist(t) for p, t in zip(final_points, targets)])
    )


def evaluate_session(
    state: DragState,
    instr: DragInstruction,
    f: FeatureField,
    z_final: Grid,
    z_orig: Grid,
    mask: Mask | None = None,
) -> EvalReport:
    """Re-localize each handle on the final latent and score the session.

    Localization scans the full grid with the same feature matcher the
    drag loop uses, so the score reflects where the content actually ended
    up rather than where the loop last tracked it.
    """
    full = np.ones((z_final.height, z_final.width), dtype=bool)
    relocated = [
        point_track(f, z_final, z_orig, handle, full)
        for handle, _ in instr.pairs
    ]
    targets = [t for _, t in instr.pairs]
    md = mean_distance(relocated, targets)

    diff = np.abs(
        z_final.data.astype(np.float64) - z_orig.data.astype(np.float64)
    )
    if mask is not None:
        outside = ~mask.grid
        l1 = float(diff[outside].mean()) if outside.any() else 0.0
    else:
        l1 = float(diff.mean())

    return EvalReport(
        per_pair_distance=tuple(p.dist(t) for p, t in zip(relocated, targets)),
        mean_dist=md,
        converged=state.converged,
        updates_used=state.total_updates,
        relocated_points=tuple(relocated),
        outside_mask_l1=l1,
    )
