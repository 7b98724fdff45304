"""Session HTTP service driving the pipeline stage by stage.

Sessions move strictly forward through created -> segmented -> masked ->
running -> done (failed is reachable from anywhere). Each drag runs on its
own worker thread; progress streams as JSON-lines from
``GET /sessions/{id}/events``, resumable from any record index. Artifact
files are written by the same stage writers the CLI uses, so identical
inputs yield byte-identical artifacts on either path.
"""

from __future__ import annotations

import json
import shutil
import tempfile
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from fastapi import FastAPI, Form, HTTPException, UploadFile
from fastapi.responses import FileResponse, StreamingResponse
from pydantic import BaseModel, Field

from .errors import DragforgeError
from .fields import FeatureField, field_forward, field_from_config
from .grid import Grid, load_grid
from .maskgen import DragInstruction, Mask
from .metrics import evaluate_session
from .pipeline import (
    ARTIFACT_FILES,
    build_instruction,
    event_line,
    stage_drag,
    stage_mask,
    stage_segment,
    write_drag_artifacts,
    write_mask_artifacts,
    write_report,
    write_segment_artifacts,
)
from .superpixel import Segmentation

MAX_UPLOAD_BYTES = 64 * 1024 * 1024

_STAGE_ORDER = {
    "created": 0,
    "segmented": 1,
    "masked": 2,
    "running": 3,
    "done": 4,
    "failed": -1,
}

# artifact name -> (file, minimum stage that produces it)
_ARTIFACTS = {
    "labels": (ARTIFACT_FILES["labels"], "segmented"),
    "mask": (ARTIFACT_FILES["mask"], "masked"),
    "trajectory": (ARTIFACT_FILES["trajectory"], "done"),
    "final": (ARTIFACT_FILES["final"], "done"),
    "report": (ARTIFACT_FILES["report"], "done"),
}

_MEDIA_TYPES = {
    ".png": "image/png",
    ".json": "application/json",
    ".dft1": "application/octet-stream",
    ".jsonl": "application/x-ndjson",
}


class SegmentBody(BaseModel):
    n_segments: int = Field(default=256, ge=1)
    compactness: float = Field(default=10.0, gt=0)
    max_iters: int = Field(default=10, ge=1)
    connectivity: bool = True


class PairBody(BaseModel):
    handle: tuple[float, float]
    target: tuple[float, float]


class MaskBody(BaseModel):
    pairs: list[PairBody] = Field(min_length=1)
    dilation: int = Field(default=0, ge=0)


class InstructionBody(BaseModel):
    n_steps: int = Field(default=16, ge=1)
    max_updates: int = Field(default=300, ge=1)
    learning_rate: float = Field(default=0.01, gt=0)
    stop_radius: float = Field(default=1.0, ge=0)


class DragBody(BaseModel):
    instruction: InstructionBody = InstructionBody()
    region_mode: str = Field(default="semantic", pattern="^(semantic|fixed_square)$")
    square_radius: int = Field(default=3, ge=1)
    background_weight: float = Field(default=0.1, ge=0)
    rollback: str = Field(default="point", pattern="^(point|latent)$")


@dataclass
class Session:
    id: str
    dir: Path
    latent: Grid
    f: FeatureField
    seg_features: Grid
    status: str = "created"
    error: str | None = None
    seg: Segmentation | None = None
    mask: Mask | None = None
    instr: DragInstruction | None = None
    pairs: list | None = None
    events: list[str] = dc_field(default_factory=list)
    cond: threading.Condition = dc_field(default_factory=threading.Condition)
    worker: threading.Thread | None = None


class SessionStore:
    def __init__(self, root: str | None = None):
        self.root = Path(root) if root else Path(tempfile.mkdtemp(prefix="dragforge-"))
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, latent: Grid, f: FeatureField, seg_features: Grid) -> Session:
        sid = uuid.uuid4().hex
        sdir = self.root / sid
        sdir.mkdir()
        session = Session(
            id=sid, dir=sdir, latent=latent, f=f, seg_features=seg_features
        )
        with self._lock:
            self._sessions[sid] = session
        return session

    def get(self, sid: str) -> Session:
        with self._lock:
            session = self._sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return session

    def delete(self, sid: str) -> None:
        session = self.get(sid)
        if session.status == "running":
            raise HTTPException(
                status_code=409, detail="session is running; wait for completion"
            )
        with self._lock:
            self._sessions.pop(sid, None)
        shutil.rmtree(session.dir, ignore_errors=True)


def _require_stage(session: Session, expected: str) -> None:
    if session.status != expected:
        raise HTTPException(
            status_code=409,
            detail=f"session is {session.status!r}; this stage needs {expected!r}",
        )


async def _read_upload(upload: UploadFile | None) -> bytes | None:
    if upload is None:
        return None
    blob = await upload.read()
    if len(blob) > MAX_UPLOAD_BYTES:
        raise HTTPException(status_code=422, detail="upload exceeds 64 MiB cap")
    return blob


def create_app(session_root: str | None = None, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="dragforge", version="0.1.0")
    store = SessionStore(session_root)
    app.state.store = store

    @app.post("/sessions", status_code=201)
    async def create_session(
        latent: UploadFile,
        features: UploadFile | None = None,
        background: UploadFile | None = None,
        field: str | None = Form(default=None),
    ):
        latent_blob = await _read_upload(latent)
        features_blob = await _read_upload(features)
        background_blob = await _read_upload(background)

        try:
            latent_grid = load_grid(latent_blob)
        except DragforgeError as exc:
            raise HTTPException(status_code=422, detail=f"latent: {exc}")

        field_cfg = {"kind": "identity"}
        if field:
            try:
                field_cfg = json.loads(field)
            except json.JSONDecodeError as exc:
                raise HTTPException(status_code=422, detail=f"field: {exc}")

        session = store.create(latent_grid, IdentityPlaceholder(), latent_grid)
        sid_dir = session.dir
        try:
            (sid_dir / "latent.dft1").write_bytes(latent_blob)
            if background_blob is not None:
                (sid_dir / "background.dft1").write_bytes(background_blob)
                if field_cfg.get("kind") == "analytic_bump":
                    field_cfg.setdefault("background_file", "background.dft1")
            session.f = field_from_config(field_cfg, sid_dir)
            if features_blob is not None:
                (sid_dir / "seg_features.dft1").write_bytes(features_blob)
                session.seg_features = load_grid(features_blob)
            else:
                session.seg_features = field_forward(session.f, latent_grid)
            if (session.seg_features.height, session.seg_features.width) != (
                latent_grid.height,
                latent_grid.width,
            ):
                raise HTTPException(
                    status_code=422,
                    detail="feature dims must match latent spatial dims",
                )
        except DragforgeError as exc:
            store.delete(session.id)
            raise HTTPException(status_code=422, detail=str(exc))
        except HTTPException:
            store.delete(session.id)
            raise
        return {"id": session.id, "status": session.status}

    @app.post("/sessions/{sid}/segment")
    def segment(sid: str, body: SegmentBody):
        session = store.get(sid)
        _require_stage(session, "created")
        try:
            session.seg = stage_segment(
                session.seg_features,
                {
                    "n_segments": body.n_segments,
                    "compactness": body.compactness,
                    "max_iters": body.max_iters,
                    "connectivity": body.connectivity,
                },
            )
        except DragforgeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        write_segment_artifacts(session.seg, session.dir)
        session.status = "segmented"
        return {"status": session.status, "n_patches": session.seg.n_patches}

    @app.post("/sessions/{sid}/mask")
    def make_mask(sid: str, body: MaskBody):
        session = store.get(sid)
        _require_stage(session, "segmented")
        pairs = [(p.handle, p.target) for p in body.pairs]
        try:
            instr = build_instruction(pairs, _default_drag())
            session.mask = stage_mask(session.seg, instr, {"dilation": body.dilation})
        except DragforgeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session.pairs = pairs
        write_mask_artifacts(session.mask, session.dir)
        session.status = "masked"
        return {
            "status": session.status,
            "source_labels": sorted(session.mask.source_labels),
        }

    @app.post("/sessions/{sid}/drag", status_code=202)
    def drag(sid: str, body: DragBody):
        session = store.get(sid)
        _require_stage(session, "masked")
        drag_params = {
            "n_steps": body.instruction.n_steps,
            "max_updates": body.instruction.max_updates,
            "learning_rate": body.instruction.learning_rate,
            "stop_radius": body.instruction.stop_radius,
            "background_weight": body.background_weight,
            "region_mode": body.region_mode,
            "square_radius": body.square_radius,
            "rollback": body.rollback,
        }
        try:
            session.instr = build_instruction(session.pairs, drag_params)
        except DragforgeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session.status = "running"
        session.worker = threading.Thread(
            target=_drag_worker, args=(session, drag_params), daemon=True
        )
        session.worker.start()
        return {"status": session.status}

    @app.get("/sessions/{sid}/events")
    def events(sid: str, start: int = 0):
        session = store.get(sid)
        if session.status not in ("running", "done", "failed"):
            raise HTTPException(
                status_code=409, detail="no drag has been started on this session"
            )

        def stream():
            i = max(0, start)
            while True:
                with session.cond:
                    while (
                        i >= len(session.events) and session.status == "running"
                    ):
                        session.cond.wait(timeout=0.25)
                    chunk = session.events[i:]
                    status = session.status
                for line in chunk:
                    yield line + "\n"
                i += len(chunk)
                if status != "running":
                    break

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    @app.get("/sessions/{sid}/artifacts/{name}")
    def artifact(sid: str, name: str):
        session = store.get(sid)
        if name not in _ARTIFACTS:
            raise HTTPException(status_code=404, detail=f"unknown artifact {name!r}")
        filename, needs = _ARTIFACTS[name]
        if _STAGE_ORDER[session.status] < _STAGE_ORDER[needs]:
            raise HTTPException(
                status_code=409,
                detail=f"artifact {name!r} needs stage {needs!r}, "
                f"session is {session.status!r}",
            )
        path = session.dir / filename
        return FileResponse(path, media_type=_MEDIA_TYPES[path.suffix])

    @app.get("/sessions/{sid}/view/{name}")
    def view(sid: str, name: str):
        from fastapi.responses import Response

        from .viz import grid_view_png

        session = store.get(sid)
        grids = {"latent": session.latent, "features": session.seg_features}
        if name not in grids:
            raise HTTPException(status_code=404, detail=f"unknown view {name!r}")
        return Response(grid_view_png(grids[name]), media_type="image/png")

    @app.get("/sessions/{sid}")
    def info(sid: str):
        session = store.get(sid)
        return {
            "id": session.id,
            "status": session.status,
            "error": session.error,
            "events": len(session.events),
        }

    @app.delete("/sessions/{sid}", status_code=204)
    def delete(sid: str):
        store.delete(sid)

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


class IdentityPlaceholder:
    """Stand-in field while session uploads are being validated."""

    kind = "identity"

    def forward(self, z: Grid) -> Grid:
        return z

    def adjoint(self, z: Grid, cotangent: Grid) -> Grid:
        return cotangent


def _default_drag() -> dict:
    from .pipeline import DRAG_DEFAULTS

    return dict(DRAG_DEFAULTS)


def _drag_worker(session: Session, drag_params: dict) -> None:
    def on_event(event: dict) -> None:
        with session.cond:
            session.events.append(event_line(event))
            session.cond.notify_all()

    try:
        z_final, state, diagnostics = stage_drag(
            session.f,
            session.latent,
            session.seg,
            session.instr,
            session.mask,
            drag_params,
            on_event,
        )
        write_drag_artifacts(z_final, state, diagnostics, session.dir)
        report = evaluate_session(
            state, session.instr, session.f, z_final, session.latent, session.mask
        )
        write_report(report, session.dir)
        terminal = {"event": "done", "converged": state.converged}
        status = "done"
    except Exception as exc:  # surface engine failures to the client
        session.error = str(exc)
        terminal = {"event": "failed", "error": str(exc)}
        status = "failed"
    with session.cond:
        session.events.append(event_line(terminal))
        session.status = status
        session.cond.notify_all()
