"""HTTP session service wrapping the segmentation pipeline.

One server process holds one read-only model; every session owns a
private classifier head. Refinements on a single session are serialized
(queued by default, or rejected with 409 when the server is configured
to refuse concurrent refines); distinct sessions are fully independent.
"""
from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import rle
from .errors import DataError, ScribbleConflictError
from .graphcut import EnergyConfig
from .grid import BoundingBox, Grid2D, LabelMap, ScribbleSet, load_image
from .model import SegmenterModel
from .pipeline import (RefineConfig, Session, final_labels, init_segment,
                       refine, session_diagnostics)

_ENERGY_KEYS = {f.name for f in fields(EnergyConfig)}
_REFINE_KEYS = {f.name for f in fields(RefineConfig)} - {"energy"}


class CreateSessionRequest(BaseModel):
    box: list
    image_id: str | None = None
    image_b64: str | None = None


class ScribblePayload(BaseModel):
    fg: list = []
    bg: list = []


class RefineRequest(BaseModel):
    scribbles: ScribblePayload = ScribblePayload()
    config: dict | None = None


def build_refine_config(overrides: dict | None, base: RefineConfig) -> RefineConfig:
    """Apply whitelisted RefineConfig/EnergyConfig overrides; 400 otherwise."""
    if not overrides:
        return base
    energy_over = {}
    refine_over = {}
    for key, value in overrides.items():
        if key in _ENERGY_KEYS:
            energy_over[key] = value
        elif key in _REFINE_KEYS:
            refine_over[key] = value
        else:
            raise HTTPException(400, f"unknown config field '{key}'")
    try:
        if energy_over:
            refine_over["energy"] = replace(base.energy, **energy_over)
        return replace(base, **refine_over)
    except (DataError, TypeError) as exc:
        raise HTTPException(400, f"invalid config override: {exc}") from exc


class _Entry:
    def __init__(self, session: Session):
        self.session = session
        self.lock = threading.Lock()
        nowish = time.monotonic()
        self.created = nowish
        self.last_access = nowish


class SessionStore:
    def __init__(self, idle_timeout: float):
        self.idle_timeout = idle_timeout
        self._entries: dict[str, _Entry] = {}
        self._guard = threading.Lock()

    def add(self, session: Session) -> str:
        sid = uuid.uuid4().hex
        with self._guard:
            self._sweep()
            self._entries[sid] = _Entry(session)
        return sid

    def get(self, sid: str) -> _Entry:
        with self._guard:
            self._sweep()
            entry = self._entries.get(sid)
            if entry is None:
                raise HTTPException(404, "unknown or expired session")
            entry.last_access = time.monotonic()
            return entry

    def remove(self, sid: str):
        with self._guard:
            if sid not in self._entries:
                raise HTTPException(404, "unknown or expired session")
            del self._entries[sid]

    def _sweep(self):
        cutoff = time.monotonic() - self.idle_timeout
        for sid in [s for s, e in self._entries.items() if e.last_access < cutoff]:
            del self._entries[sid]


def _mask_payload(session: Session) -> dict:
    mask = final_labels(session)
    return {
        "mask_rle": rle.encode_mask(mask),
        "mask_size": [mask.width, mask.height],
    }


def _scribble_runs(session: Session) -> dict:
    fg, bg = session.scribbles.masks(session.crop.width, session.crop.height)
    return {"fg": rle.encode_mask(LabelMap(fg.astype("uint8"))),
            "bg": rle.encode_mask(LabelMap(bg.astype("uint8")))}


def _session_payload(sid: str, session: Session) -> dict:
    diag = session_diagnostics(session)
    p = session.prob.plane()
    body = {
        "session_id": sid,
        "box": diag["box"],
        "image_size": diag["image_size"],
        "crop_size": diag["resized_size"],
        "scribble_count": diag["scribble_count"],
        "scribbles": _scribble_runs(session),
        "prob_summary": {"min": float(p.min()), "mean": float(p.mean()),
                         "max": float(p.max())},
        "history": diag["history"],
    }
    body.update(_mask_payload(session))
    return body


def create_app(model: SegmenterModel, image_dir=None, *,
               refine_defaults: RefineConfig = RefineConfig(),
               idle_timeout: float = 3600.0,
               max_pixels: int = 4_000_000,
               queue_refines: bool = True) -> FastAPI:
    app = FastAPI(title="bifseg", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    store = SessionStore(idle_timeout)
    app.state.store = store

    def _load_request_image(req: CreateSessionRequest) -> Grid2D:
        if req.image_b64 is not None:
            try:
                raw = base64.b64decode(req.image_b64, validate=True)
            except Exception as exc:
                raise HTTPException(400, f"bad base64 image: {exc}") from exc
            try:
                return load_image(io.BytesIO(raw))
            except DataError as exc:
                raise HTTPException(400, str(exc)) from exc
        if req.image_id is not None:
            if image_dir is None:
                raise HTTPException(404, "server has no image directory")
            path = (Path(image_dir) / req.image_id).resolve()
            if Path(image_dir).resolve() not in path.parents or not path.is_file():
                raise HTTPException(404, f"unknown image '{req.image_id}'")
            try:
                return load_image(path)
            except DataError as exc:
                raise HTTPException(400, str(exc)) from exc
        raise HTTPException(400, "provide image_id or image_b64")

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        image = _load_request_image(req)
        if image.width * image.height > max_pixels:
            raise HTTPException(413, "image too large")
        if len(req.box) != 4:
            raise HTTPException(400, "box must be [x_min, y_min, x_max, y_max]")
        try:
            box = BoundingBox(*[int(v) for v in req.box])
            session = init_segment(model, image, box)
        except DataError as exc:
            raise HTTPException(400, str(exc)) from exc
        sid = store.add(session)
        return _session_payload(sid, session)

    @app.post("/sessions/{sid}/refine")
    def refine_session(sid: str, req: RefineRequest):
        entry = store.get(sid)
        cfg = build_refine_config(req.config, refine_defaults)
        w, h = entry.session.crop.width, entry.session.crop.height
        try:
            scribbles = ScribbleSet(rle.decode_pixels(req.scribbles.fg, w, h),
                                    rle.decode_pixels(req.scribbles.bg, w, h))
        except ScribbleConflictError as exc:
            raise HTTPException(409, {"message": str(exc), "pixels": exc.pixels}) from exc
        except DataError as exc:
            raise HTTPException(400, str(exc)) from exc

        if not entry.lock.acquire(blocking=queue_refines):
            raise HTTPException(409, "a refinement is already running for this session")
        try:
            t0 = time.perf_counter()
            refine(entry.session, scribbles, cfg)
            wall = time.perf_counter() - t0
        except ScribbleConflictError as exc:
            raise HTTPException(409, {"message": str(exc), "pixels": exc.pixels}) from exc
        except DataError as exc:
            raise HTTPException(400, str(exc)) from exc
        finally:
            entry.lock.release()
        body = _session_payload(sid, entry.session)
        body["machine_time"] = wall
        return body

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        entry = store.get(sid)
        return _session_payload(sid, entry.session)

    @app.get("/sessions/{sid}/probability")
    def get_probability(sid: str):
        # crop-grid foreground probabilities quantized to uint8 for the
        # UI's heatmap view
        entry = store.get(sid)
        p = entry.session.prob.plane()
        q8 = np.clip(np.rint(p * 255.0), 0, 255).astype(np.uint8)
        return {"size": [entry.session.crop.width, entry.session.crop.height],
                "q8": base64.b64encode(q8.tobytes()).decode()}

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str):
        store.remove(sid)
        return Response(status_code=204)

    return app
