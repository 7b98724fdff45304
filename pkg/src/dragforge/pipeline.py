"""Config-driven pipeline: segment -> mask -> drag -> sample -> evaluate.

The CLI and the HTTP service both run these exact stage functions and
artifact writers, so identical inputs produce byte-identical artifacts on
either path. Artifacts carry no timestamps or ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dragopt import DragState, RegionMode, drag_session_run
from .errors import ConfigError
from .fields import FeatureField, field_forward, field_from_config
from .grid import Grid, load_grid, write_dft1
from .maskgen import (
    DragInstruction,
    Mask,
    generate_mask,
    read_mask_png,
    write_mask_png,
)
from .metrics import EvalReport, evaluate_session
from .sampler import NoiseSchedule, guided_sample
from .sampler import (
    ConstantPredictor,
    LinearPredictor,
    TabulatedPredictor,
    ZeroPredictor,
)
from .superpixel import (
    Segmentation,
    slic_segment,
    write_labels_dft1,
    write_labels_png,
)

SEGMENT_DEFAULTS = {
    "n_segments": 256,
    "compactness": 10.0,
    "max_iters": 10,
    "connectivity": True,
}
DRAG_DEFAULTS = {
    "n_steps": 16,
    "max_updates": 300,
    "learning_rate": 0.01,
    "stop_radius": 1.0,
    "background_weight": 0.1,
    "region_mode": "semantic",
    "square_radius": 3,
    "rollback": "point",
}
SAMPLE_DEFAULTS = {
    "enabled": False,
    "schedule": {"scaled_linear": {"steps": 50}},
    "predictor": {"kind": "zero"},
    "invert_to": 35,
    "guidance_scale": 0.0,
    "guidance_window": [1, 35],
    "patch_radius": 3,
    "temperature": 0.07,
}

ARTIFACT_FILES = {
    "labels": "labels.png",
    "labels_raw": "labels.dft1",
    "mask": "mask.png",
    "trajectory": "trajectory.json",
    "events": "diagnostics.jsonl",
    "final": "final_latent.dft1",
    "report": "report.json",
    "sampled": "sampled_latent.dft1",
}


@dataclass
class PipelineConfig:
    latent: Grid
    f: FeatureField
    seg_features: Grid
    pairs: list[tuple[tuple[float, float], tuple[float, float]]]
    segment: dict
    mask_params: dict
    drag: dict
    sample: dict
    imported_mask: Mask | None = None
    seed: int = 0


def _merged(defaults: dict, given: dict | None, section: str) -> dict:
    out = dict(defaults)
    for key, value in (given or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in section {section!r}")
        out[key] = value
    return out


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a config document, loading its input files."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc, base_dir=path.parent)


def parse_config(doc: dict, base_dir: str | Path = ".") -> PipelineConfig:
    base = Path(base_dir)
    inputs = doc.get("inputs") or {}
    if "latent" not in inputs:
        raise ConfigError("inputs.latent is required")
    latent_path = base / inputs["latent"]
    if not latent_path.is_file():
        raise ConfigError(f"latent file not found: {latent_path}")
    latent = load_grid(latent_path)

    f = field_from_config(doc.get("field") or {"kind": "identity"}, base)

    feat_spec = inputs.get("features") or {"from_field": True}
    if "file" in feat_spec:
        feat_path = base / feat_spec["file"]
        if not feat_path.is_file():
            raise ConfigError(f"feature file not found: {feat_path}")
        seg_features = load_grid(feat_path)
    elif feat_spec.get("from_field"):
        seg_features = field_forward(f, latent)
    else:
        raise ConfigError("inputs.features needs 'file' or 'from_field'")
    if (seg_features.height, seg_features.width) != (latent.height, latent.width):
        raise ConfigError(
            f"feature dims {seg_features.shape[:2]} != latent dims "
            f"{(latent.height, latent.width)}"
        )

    raw_pairs = doc.get("pairs") or []
    if not raw_pairs:
        raise ConfigError("at least one handle/target pair is required")
    pairs = []
    for i, p in enumerate(raw_pairs):
        try:
            handle = (float(p["handle"][0]), float(p["handle"][1]))
            target = (float(p["target"][0]), float(p["target"][1]))
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"pairs[{i}] malformed: {p!r}") from exc
        pairs.append((handle, target))

    mask_params = _merged(
        {"dilation": 0, "import_file": None}, doc.get("mask"), "mask"
    )
    imported_mask = None
    if mask_params["import_file"]:
        mask_path = base / mask_params["import_file"]
        if not mask_path.is_file():
            raise ConfigError(f"mask file not found: {mask_path}")
        imported_mask = read_mask_png(mask_path)

    sample = _merged(SAMPLE_DEFAULTS, doc.get("sample"), "sample")
    if sample["enabled"] and "file" in (sample["schedule"] or {}):
        sched_path = base / sample["schedule"]["file"]
        if not sched_path.is_file():
            raise ConfigError(f"schedule file not found: {sched_path}")

    return PipelineConfig(
        latent=latent,
        f=f,
        seg_features=seg_features,
        pairs=pairs,
        segment=_merged(SEGMENT_DEFAULTS, doc.get("segment"), "segment"),
        mask_params=mask_params,
        drag=_merged(DRAG_DEFAULTS, doc.get("drag"), "drag"),
        sample=sample,
        imported_mask=imported_mask,
        seed=int(doc.get("seed", 0)),
    )


def build_instruction(pairs, drag: dict) -> DragInstruction:
    return DragInstruction.from_pairs(
        pairs,
        n_steps=int(drag["n_steps"]),
        max_updates=int(drag["max_updates"]),
        learning_rate=float(drag["learning_rate"]),
        stop_radius=float(drag["stop_radius"]),
    )


def build_predictor(spec: dict):
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return ZeroPredictor()
    if kind == "constant":
        return ConstantPredictor(float(spec.get("value", 0.1)))
    if kind == "linear":
        return LinearPredictor(
            float(spec.get("gain", 0.1)), float(spec.get("bias", 0.0))
        )
    if kind == "tabulated":
        if "table" in spec:
            return TabulatedPredictor(
                np.asarray(spec["table"], dtype=np.float64),
                float(spec.get("lo", -4.0)),
                float(spec.get("hi", 4.0)),
            )
        return TabulatedPredictor.identity_like(float(spec.get("scale", 0.3)))
    raise ConfigError(f"unknown predictor kind {kind!r}")


def build_schedule(spec: dict, base_dir: str | Path = ".") -> NoiseSchedule:
    if "file" in spec:
        return NoiseSchedule.load(Path(base_dir) / spec["file"])
    if "scaled_linear" in spec:
        return NoiseSchedule.scaled_linear(
            int(spec["scaled_linear"].get("steps", 50))
        )
    if "alpha" in spec:
        return NoiseSchedule(np.asarray(spec["alpha"], dtype=np.float64))
    raise ConfigError("schedule needs 'file', 'scaled_linear', or 'alpha'")


# ---------------------------------------------------------------------------
# Stages and their artifact writers
# ---------------------------------------------------------------------------

def stage_segment(features: Grid, params: dict) -> Segmentation:
    return slic_segment(
        features,
        n_segments=int(params["n_segments"]),
        compactness=float(params["compactness"]),
        max_iters=int(params["max_iters"]),
        connectivity=bool(params.get("connectivity", True)),
    )


def write_segment_artifacts(seg: Segmentation, out_dir: Path) -> None:
    write_labels_dft1(seg, out_dir / ARTIFACT_FILES["labels_raw"])
    write_labels_png(seg, out_dir / ARTIFACT_FILES["labels"])


def stage_mask(seg: Segmentation, instr: DragInstruction, params: dict) -> Mask:
    return generate_mask(seg, instr, dilation=int(params.get("dilation", 0)))


def write_mask_artifacts(mask: Mask, out_dir: Path) -> None:
    write_mask_png(mask, out_dir / ARTIFACT_FILES["mask"])


def event_line(event: dict) -> str:
    return json.dumps(event, sort_keys=True)


def stage_drag(
    cfg_f: FeatureField,
    latent: Grid,
    seg: Segmentation,
    instr: DragInstruction,
    mask: Mask,
    drag: dict,
    on_event: Callable[[dict], None] | None = None,
) -> tuple[Grid, DragState, dict]:
    mode = RegionMode(
        mode=str(drag["region_mode"]),
        square_radius=int(drag["square_radius"]),
    )
    return drag_session_run(
        cfg_f,
        latent,
        seg,
        instr,
        mode,
        mask,
        background_weight=float(drag["background_weight"]),
        rollback=str(drag["rollback"]),
        on_event=on_event,
    )


def write_drag_artifacts(
    z_final: Grid, state: DragState, diagnostics: dict, out_dir: Path
) -> None:
    with open(out_dir / ARTIFACT_FILES["events"], "w") as fh:
        for event in diagnostics["events"]:
            fh.write(event_line(event) + "\n")
    trajectory = {
        "converged": state.converged,
        "total_updates": state.total_updates,
        "accepted_steps": list(state.accepted_steps),
        "points": [[[p.x, p.y] for p in track] for track in state.trajectory],
        "final_points": [[p.x, p.y] for p in state.points],
    }
    (out_dir / ARTIFACT_FILES["trajectory"]).write_text(
        json.dumps(trajectory, sort_keys=True, indent=2) + "\n"
    )
    write_dft1(z_final, out_dir / ARTIFACT_FILES["final"])


def stage_sample(
    cfg: PipelineConfig, z_after_drag: Grid, base_dir: str | Path = "."
) -> Grid:
    """Invert the dragged latent to the optimization step, then sample back
    with correspondence guidance toward the targets."""
    from .sampler import ddim_invert

    spec = cfg.sample
    sched = build_schedule(spec["schedule"], base_dir)
    pred = build_predictor(spec["predictor"])
    t_opt = int(spec["invert_to"])
    z_t = ddim_invert(z_after_drag, sched, pred, t_end=t_opt)
    lo, hi = spec["guidance_window"]
    return guided_sample(
        z_t,
        sched,
        pred,
        z0_ref=cfg.latent,
        pairs=cfg.pairs,
        radius=int(spec["patch_radius"]),
        guidance_scale=float(spec["guidance_scale"]),
        guidance_window=(int(lo), int(hi)),
        temperature=float(spec["temperature"]),
        t_start=t_opt,
    )


def write_report(report: EvalReport, out_dir: Path) -> None:
    (out_dir / ARTIFACT_FILES["report"]).write_text(report.to_json() + "\n")


def run_pipeline(
    cfg: PipelineConfig,
    out_dir: str | Path,
    base_dir: str | Path = ".",
    on_event: Callable[[dict], None] | None = None,
) -> EvalReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    seg = stage_segment(cfg.seg_features, cfg.segment)
    write_segment_artifacts(seg, out)

    instr = build_instruction(cfg.pairs, cfg.drag)
    mask = cfg.imported_mask or stage_mask(seg, instr, cfg.mask_params)
    write_mask_artifacts(mask, out)

    z_final, state, diagnostics = stage_drag(
        cfg.f, cfg.latent, seg, instr, mask, cfg.drag, on_event
    )
    write_drag_artifacts(z_final, state, diagnostics, out)

    if cfg.sample.get("enabled"):
        sampled = stage_sample(cfg, z_final, base_dir)
        write_dft1(sampled, out / ARTIFACT_FILES["sampled"])

    report = evaluate_session(state, instr, cfg.f, z_final, cfg.latent, mask)
    write_report(report, out)
    return report
