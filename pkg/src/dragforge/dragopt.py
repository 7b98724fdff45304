"""Latent optimization that drags feature content from handles to targets.

Each update: evaluate the motion-supervision loss over the per-point
regions, descend the latent, re-localize every handle by feature matching,
then accept or reject the tracked step by its direction and length
relative to the drag axis. Rejected steps keep the latent update but roll
the tracked point back, so optimization continues from the same point
until a step of at least the ideal length lands (or the update budget
runs out).

Regions come either from the superpixel patch containing the current
point (semantic mode) or from a fixed square around it (baseline mode).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError
from .fields import FeatureField, field_adjoint, field_forward
from .grid import Grid, Point, bilinear_sample, bilinear_sample_many, scatter_bilinear
from .maskgen import DragInstruction, Mask, mask_complement_weighting
from .superpixel import Segmentation, region_of

ACCEPT = "accept"
REJECT_DIRECTION = "reject-direction"
REJECT_DISTANCE = "reject-distance"

DEFAULT_BACKGROUND_WEIGHT = 0.1


@dataclass(frozen=True)
class RegionMode:
    """Region selection: superpixel patches or the fixed-square baseline."""

    mode: str = "semantic"
    square_radius: int = 3

    def __post_init__(self) -> None:
        if self.mode not in ("semantic", "fixed_square"):
            raise ParameterError(f"unknown region mode {self.mode!r}")
        if self.mode == "fixed_square" and self.square_radius < 1:
            raise ParameterError("square_radius must be >= 1")


@dataclass
class DragState:
    """Mutable record of a drag session."""

    iteration: int
    latent: Grid
    points: list[Point]
    accepted_steps: list[int]
    total_updates: int
    trajectory: list[list[Point]]
    converged: bool


def motion_supervision_loss(
    f: FeatureField,
    z: Grid,
    z_ref: Grid,
    pairs: list[tuple[Point, Point]],
    regions: list[np.ndarray],
    mask: Mask,
    background_weight: float,
    background_term: str = "reference",
) -> tuple[float, Grid, int]:
    """Loss pulling region features one unit along each drag axis.

    Per pair, sums |F(z) at q+d  -  stopgrad(F(z) at q)| over the region's
    pixels q, where d is the unit handle-to-target direction, plus an L1
    penalty keeping the latent at its reference outside the mask. Returns
    (loss, gradient w.r.t. z through the non-stopgrad paths, count of
    region terms skipped because q+d left the grid).

    ``background_term="self"`` switches the penalty to its literal
    self-referential form, which is identically zero.
    """
    if z.shape != z_ref.shape:
        raise ShapeError(f"z shape {z.shape} != reference shape {z_ref.shape}")
    if len(pairs) != len(regions):
        raise ShapeError("one region required per pair")
    if mask.grid.shape != (z.height, z.width):
        raise ShapeError(
            f"mask shape {mask.grid.shape} != latent spatial dims "
            f"({z.height}, {z.width})"
        )

    feat = field_forward(f, z)
    h, w, _ = feat.shape
    cotangent = np.zeros(feat.shape, dtype=np.float64)
    loss = 0.0
    skipped = 0

    for (handle, target), region in zip(pairs, regions):
        if not region.any():
            raise ParameterError("empty supervision region")
        if handle == target:
            continue
        length = handle.dist(target)
        dx = (target.x - handle.x) / length
        dy = (target.y - handle.y) / length
        qs = np.argwhere(region)
        ys = qs[:, 0].astype(np.float64)
        xs = qs[:, 1].astype(np.float64)
        sx = xs + dx
        sy = ys + dy
        ok = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        skipped += int((~ok).sum())
        if not ok.any():
            continue
        anchor = feat.data[qs[ok, 0], qs[ok, 1]].astype(np.float64)
        moved = bilinear_sample_many(feat.data, sx[ok], sy[ok])
        diff = moved - anchor
        loss += float(np.abs(diff).sum())
        cotangent += scatter_bilinear(feat.shape, sx[ok], sy[ok], np.sign(diff))

    grad = field_adjoint(f, z, Grid.from_array(cotangent)).data.astype(np.float64)

    if background_term == "reference":
        outside = mask_complement_weighting(mask).data.astype(np.float64)
        resid = (z.data.astype(np.float64) - z_ref.data.astype(np.float64)) * outside
        loss += background_weight * float(np.abs(resid).sum())
        grad = grad + background_weight * np.sign(resid)
    elif background_term != "self":
        raise ParameterError(f"unknown background_term {background_term!r}")

    return loss, Grid.from_array(grad), skipped


def latent_step(z: Grid, gradient: Grid, lr: float) -> Grid:
    """Plain gradient-descent step z - lr * gradient."""
    if z.shape != gradient.shape:
        raise ShapeError(f"gradient shape {gradient.shape} != latent {z.shape}")
    if lr <= 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    g = gradient.data
    if not np.isfinite(g).all():
        bad = np.argwhere(~np.isfinite(g))[0]
        raise NumericError(
            f"non-finite gradient at (y={bad[0]}, x={bad[1]}, c={bad[2]})"
        )
    return Grid.from_array(
        z.data.astype(np.float64) - lr * g.astype(np.float64)
    )


def point_track(
    f: FeatureField,
    z_new: Grid,
    z_orig: Grid,
    p0: Point,
    region: np.ndarray,
) -> Point:
    """Integer pixel in the region whose features best match the original
    handle feature, by L1 distance; ties go to the smallest (y, x)."""
    if not region.any():
        raise ParameterError("empty tracking region")
    ref = bilinear_sample(field_forward(f, z_orig), p0)
    feat = field_forward(f, z_new)
    qs = np.argwhere(region)  # row-major: (y, x) lexicographic ascending
    vals = feat.data[qs[:, 0], qs[:, 1]].astype(np.float64)
    dists = np.abs(vals - ref).sum(axis=1)
    best = int(np.argmin(dists))  # first minimum keeps the tie-break order
    return Point(float(qs[best, 1]), float(qs[best, 0]))


def accept_step(
    h_prev: Point, h_new: Point, p0: Point, target: Point, ideal_d: float
) -> str:
    """Backtracking rule: keep a step only if it moves toward the target
    and covers at least the ideal per-step distance along the drag axis."""
    if p0 == target:
        raise ParameterError("accept_step needs a non-degenerate pair")
    step = np.array([h_new.x - h_prev.x, h_new.y - h_prev.y])
    axis = np.array([target.x - p0.x, target.y - p0.y])
    # hypot, not sqrt(dot): squaring underflows for subnormal-sized steps
    step_len = float(np.hypot(step[0], step[1]))
    if step_len == 0.0:
        return REJECT_DIRECTION
    proj = float(step @ axis) / float(np.hypot(axis[0], axis[1]))
    if proj <= 0.0:
        return REJECT_DIRECTION
    if proj < ideal_d:
        return REJECT_DISTANCE
    return ACCEPT


def _square_region(
    height: int, width: int, p: Point, radius: int
) -> np.ndarray:
    cx = int(np.floor(p.x + 0.5))
    cy = int(np.floor(p.y + 0.5))
    region = np.zeros((height, width), dtype=bool)
    region[
        max(0, cy - radius) : min(height, cy + radius + 1),
        max(0, cx - radius) : min(width, cx + radius + 1),
    ] = True
    return region


def region_for(
    seg: Segmentation, p: Point, mode: RegionMode
) -> np.ndarray:
    if mode.mode == "semantic":
        return region_of(seg, p)
    return _square_region(seg.height, seg.width, p, mode.square_radius)


def drag_session_run(
    f: FeatureField,
    z_init: Grid,
    seg: Segmentation,
    instr: DragInstruction,
    region_mode: RegionMode,
    mask: Mask,
    background_weight: float = DEFAULT_BACKGROUND_WEIGHT,
    rollback: str = "point",
    on_event=None,
) -> tuple[Grid, DragState, dict]:
    """Run the full drag loop until every point reaches its target or the
    update budget is exhausted.

    Rejected steps roll back the tracked point but keep the latent update
    (``rollback="point"``); ``rollback="latent"`` additionally restores the
    previous latent on updates where every point was rejected.
    """
    if rollback not in ("point", "latent"):
        raise ParameterError(f"unknown rollback mode {rollback!r}")
    if (seg.height, seg.width) != (z_init.height, z_init.width):
        raise ShapeError(
            f"segmentation dims ({seg.height}, {seg.width}) != latent "
            f"({z_init.height}, {z_init.width})"
        )

    handles = [h for h, _ in instr.pairs]
    targets = [t for _, t in instr.pairs]
    ideal = [
        h.dist(t) / instr.n_steps if h != t else 0.0
        for h, t in instr.pairs
    ]
    points = list(handles)
    trajectory = [[h] for h in handles]
    accepted = [0] * len(points)
    events: list[dict] = []
    total_skipped = 0
    losses: list[float] = []
    z = z_init
    updates = 0
    converged = False

    def active_indices() -> list[int]:
        return [
            i
            for i in range(len(points))
            if handles[i] != targets[i]
            and points[i].dist(targets[i]) > instr.stop_radius
        ]

    while True:
        active = active_indices()
        if not active:
            converged = True
            break
        if updates >= instr.max_updates:
            break
        regions = [region_for(seg, points[i], region_mode) for i in active]
        loss, grad, skipped = motion_supervision_loss(
            f,
            z,
            z_init,
            [(points[i], targets[i]) for i in active],
            regions,
            mask,
            background_weight,
        )
        total_skipped += skipped
        losses.append(loss)
        z_prev = z
        z = latent_step(z, grad, instr.learning_rate)
        any_accepted = False
        for i, region in zip(active, regions):
            tracked = point_track(f, z, z_init, handles[i], region)
            decision = accept_step(
                points[i], tracked, handles[i], targets[i], ideal[i]
            )
            if decision == ACCEPT:
                points[i] = tracked
                trajectory[i].append(tracked)
                accepted[i] += 1
                any_accepted = True
            event = {
                "k": updates,
                "point": i,
                "decision": decision,
                "loss": loss,
                "distance": points[i].dist(targets[i]),
            }
            events.append(event)
            if on_event is not None:
                on_event(event)
        if rollback == "latent" and not any_accepted:
            z = z_prev
        updates += 1

    state = DragState(
        iteration=updates,
        latent=z,
        points=points,
        accepted_steps=accepted,
        total_updates=updates,
        trajectory=trajectory,
        converged=converged,
    )
    diagnostics = {
        "events": events,
        "losses": losses,
        "skipped_terms": total_skipped,
        "converged": converged,
        "final_distances": [points[i].dist(targets[i]) for i in range(len(points))],
    }
    return z, state, diagnostics
