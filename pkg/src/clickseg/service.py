"""Session-oriented HTTP API for interactive segmentation.

Each session holds an image, its click history, and the current mask chain;
clicks, refinement, and undo run through the same engine entry points the
benchmark uses. Masks travel as base64 PNG plus summary statistics; pass
``?full=1`` to any mask-returning endpoint to get the raw probability map in
the CSPM byte format as well. Sessions expire after an idle TTL and are not
persisted across restarts.
"""

from __future__ import annotations

import base64
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Request
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import cfr as cfr_engine
from .cfr import CfrConfig, SegmentationSession
from .core import (
    BinaryMask,
    Click,
    binarize,
    image_from_bytes,
    iou,
    mask_from_png_bytes,
    mask_to_png_bytes,
    prob_map_to_bytes,
)
from .encoding import DEFAULT_CLICK_RADIUS
from .segmenter import Segmenter

DEFAULT_MAX_DIM = 2048
DEFAULT_TTL_SECONDS = 30 * 60


@dataclass
class SessionEntry:
    session: SegmentationSession
    cfr: CfrConfig
    gt: BinaryMask | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_activity: float = field(default_factory=time.monotonic)
    last_inner_steps: int = 0

    def touch(self) -> None:
        self.last_activity = time.monotonic()


class SessionStore:
    """Concurrent id -> session map with idle expiry."""

    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        self.ttl_seconds = ttl_seconds
        self._lock = threading.Lock()
        self._entries: dict[str, SessionEntry] = {}

    def create(self, entry: SessionEntry) -> str:
        session_id = uuid.uuid4().hex
        with self._lock:
            self._entries[session_id] = entry
        return session_id

    def get(self, session_id: str) -> SessionEntry:
        self.sweep()
        with self._lock:
            entry = self._entries.get(session_id)
        if entry is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return entry

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._entries:
                raise HTTPException(status_code=404, detail="unknown session")
            del self._entries[session_id]

    def sweep(self) -> None:
        cutoff = time.monotonic() - self.ttl_seconds
        with self._lock:
            dead = [k for k, e in self._entries.items() if e.last_activity < cutoff]
            for k in dead:
                del self._entries[k]

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class ClickBody(BaseModel):
    u: int
    v: int
    label: int


class RefineBody(BaseModel):
    mode: str | None = None
    n: int | None = None
    threshold: int | None = None


def _cfr_from_fields(base: CfrConfig, mode, n, threshold) -> CfrConfig:
    try:
        return CfrConfig(
            mode=mode if mode is not None else base.mode,
            n=n if n is not None else base.n,
            pixel_threshold=threshold if threshold is not None else base.pixel_threshold,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app(
    segmenter: Segmenter,
    default_cfr: CfrConfig = CfrConfig(),
    *,
    max_dim: int = DEFAULT_MAX_DIM,
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
    click_radius: int = DEFAULT_CLICK_RADIUS,
    static_dir=None,
) -> FastAPI:
    app = FastAPI(title="clickseg session service")
    store = SessionStore(ttl_seconds=ttl_seconds)
    app.state.store = store
    app.state.segmenter = segmenter

    def mask_payload(entry: SessionEntry, full: bool) -> dict:
        mask = binarize(entry.session.current_mask)
        values = entry.session.current_mask.values
        payload = {
            "mask": base64.b64encode(mask_to_png_bytes(mask)).decode("ascii"),
            "prob_stats": {
                "min": float(values.min()),
                "max": float(values.max()),
                "mean": float(values.mean()),
                "fg_fraction": float(mask.area) / (mask.width * mask.height),
            },
            "step": entry.session.step,
            "inner_steps": entry.last_inner_steps,
            "iou": iou(mask, entry.gt) if entry.gt is not None else None,
        }
        if full:
            payload["prob_map"] = base64.b64encode(
                prob_map_to_bytes(entry.session.current_mask)
            ).decode("ascii")
        return payload

    async def parse_create(request: Request) -> tuple[bytes, bytes | None, CfrConfig]:
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            if "image" not in form:
                raise HTTPException(status_code=400, detail="missing image file")
            image_bytes = await form["image"].read()
            gt_bytes = await form["gt"].read() if "gt" in form else None
            cfr = _cfr_from_fields(
                default_cfr,
                form.get("cfr_mode"),
                int(form["cfr_n"]) if "cfr_n" in form else None,
                int(form["cfr_threshold"]) if "cfr_threshold" in form else None,
            )
            return image_bytes, gt_bytes, cfr
        body = await request.json()
        if "image_b64" not in body:
            raise HTTPException(status_code=400, detail="missing image_b64")
        try:
            image_bytes = base64.b64decode(body["image_b64"])
            gt_bytes = base64.b64decode(body["gt_b64"]) if body.get("gt_b64") else None
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"bad base64: {exc}") from exc
        cfr_body = body.get("cfr") or {}
        cfr = _cfr_from_fields(
            default_cfr,
            cfr_body.get("mode"),
            cfr_body.get("n"),
            cfr_body.get("threshold"),
        )
        return image_bytes, gt_bytes, cfr

    @app.post("/api/sessions", status_code=201)
    async def create_session(request: Request):
        image_bytes, gt_bytes, cfr = await parse_create(request)
        try:
            image = image_from_bytes(image_bytes)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if image.width > max_dim or image.height > max_dim:
            raise HTTPException(
                status_code=413,
                detail=f"image exceeds the {max_dim}x{max_dim} limit",
            )
        gt = None
        if gt_bytes is not None:
            try:
                gt = mask_from_png_bytes(gt_bytes)
            except Exception as exc:
                raise HTTPException(status_code=400, detail=f"bad gt mask: {exc}") from exc
            if (gt.height, gt.width) != (image.height, image.width):
                raise HTTPException(
                    status_code=400, detail="gt mask does not match image size"
                )
        entry = SessionEntry(session=SegmentationSession.new(image), cfr=cfr, gt=gt)
        session_id = store.create(entry)
        return {"session_id": session_id, "width": image.width, "height": image.height}

    @app.post("/api/sessions/{session_id}/clicks")
    def add_click(session_id: str, body: ClickBody, full: int = 0):
        entry = store.get(session_id)
        with entry.lock:
            image = entry.session.image
            if not (0 <= body.u < image.width and 0 <= body.v < image.height):
                raise HTTPException(status_code=422, detail="click out of bounds")
            if body.label not in (0, 1):
                raise HTTPException(status_code=422, detail="label must be 0 or 1")
            if (body.u, body.v) in entry.session.clicks.positions():
                raise HTTPException(
                    status_code=422, detail="position already clicked"
                )
            session, inner = cfr_engine.interact(
                entry.session,
                segmenter,
                Click(body.u, body.v, body.label),
                entry.cfr,
                click_radius,
            )
            entry.session = session
            entry.last_inner_steps = inner
            entry.touch()
            return mask_payload(entry, bool(full))

    @app.post("/api/sessions/{session_id}/refine")
    def refine(session_id: str, body: RefineBody, full: int = 0):
        entry = store.get(session_id)
        with entry.lock:
            if entry.session.step < 1:
                raise HTTPException(
                    status_code=409, detail="refine requires at least one click"
                )
            cfg = _cfr_from_fields(entry.cfr, body.mode, body.n, body.threshold)
            if cfg.mode == cfr_engine.FIXED:
                session = cfr_engine.refine_fixed(
                    entry.session, segmenter, cfg.n, click_radius
                )
                inner = cfg.n
            else:
                session, inner = cfr_engine.refine_adaptive(
                    entry.session, segmenter, cfg.n, cfg.pixel_threshold, click_radius
                )
            entry.session = session
            entry.last_inner_steps = inner
            entry.touch()
            return mask_payload(entry, bool(full))

    @app.post("/api/sessions/{session_id}/undo")
    def undo(session_id: str, full: int = 0):
        entry = store.get(session_id)
        with entry.lock:
            if entry.session.step < 1:
                raise HTTPException(status_code=409, detail="no clicks to undo")
            session, inner = cfr_engine.undo(
                entry.session, segmenter, entry.cfr, click_radius
            )
            entry.session = session
            entry.last_inner_steps = inner
            entry.touch()
            return mask_payload(entry, bool(full))

    @app.get("/api/sessions/{session_id}")
    def get_state(session_id: str, full: int = 0):
        entry = store.get(session_id)
        with entry.lock:
            entry.touch()
            payload = mask_payload(entry, bool(full))
            payload.update(
                {
                    "session_id": session_id,
                    "width": entry.session.image.width,
                    "height": entry.session.image.height,
                    "clicks": [
                        {"u": c.u, "v": c.v, "label": c.label}
                        for c in entry.session.clicks
                    ],
                    "config": {
                        "mode": entry.cfr.mode,
                        "n": entry.cfr.n,
                        "threshold": entry.cfr.pixel_threshold,
                    },
                }
            )
            return payload

    @app.delete("/api/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        store.delete(session_id)

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
