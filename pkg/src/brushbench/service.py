"""HTTP session service: browser UI and scripted clients drive segmentation
sessions, submit strokes, fetch masks and live errors, and replay robot users.

State layout under BRUSHBENCH_STATE_DIR (default ./brushbench-state):
  sessions/<id>.jsonl   append-only event log; replayed on startup so a
                        restarted service reproduces identical segmentations
  uploads/<id>.*.png    uploaded images

Masks travel base64-encoded as uint32-LE run lengths over row-major order,
starting with a (possibly zero) run of background.
"""

from __future__ import annotations

import base64
import io
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field as dc_field
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .data import (RgbImage, LabelMap, Trimap, BrushStroke,
                   load_dataset, disk_mask)
from .errors import BrushBenchError, MissingSeedsError
from .energy import Params
from .evaluation import hamming_error
from .robot import RobotPolicy, run_robot
from .segmenters import SegmenterConfig, start_session


# ---------------------------------------------------------------------------
# Mask run-length codec
# ---------------------------------------------------------------------------

def encode_mask_rle(labels: np.ndarray) -> str:
    """Row-major RLE: alternating run lengths starting with label 0."""
    flat = np.asarray(labels, dtype=np.uint8).reshape(-1)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [len(flat)]])
    runs = np.diff(bounds).astype(np.uint32)
    if flat[0] == 1:  # leading zero-length bg run keeps the parity convention
        runs = np.concatenate([[np.uint32(0)], runs])
    return base64.b64encode(runs.astype("<u4").tobytes()).decode("ascii")


def decode_mask_rle(data: str, width: int, height: int) -> np.ndarray:
    runs = np.frombuffer(base64.b64decode(data), dtype="<u4").astype(np.int64)
    total = int(runs.sum())
    if total != width * height:
        raise ValueError(f"RLE covers {total} pixels, expected {width * height}")
    flat = np.zeros(total, dtype=np.uint8)
    pos = 0
    for i, run in enumerate(runs):
        if i % 2 == 1:
            flat[pos:pos + run] = 1
        pos += run
    return flat.reshape(height, width)


# ---------------------------------------------------------------------------
# Wire models
# ---------------------------------------------------------------------------

class ParamsModel(BaseModel):
    w_c: float = Field(0.25, ge=0)
    w_i: float = Field(5.0, ge=0)
    w_beta: float = Field(1.0, gt=0)


class ConfigModel(BaseModel):
    system: Literal["GCS", "GC", "GCA", "GEO"] = "GCA"
    params: ParamsModel = ParamsModel()
    gmm_k: int = Field(5, ge=1)
    gmm_seed: int = 0
    gc_iterations: int = Field(4, ge=1)
    geo_eps: float = Field(1e-4, ge=0)

    def to_config(self) -> SegmenterConfig:
        return SegmenterConfig(
            system=self.system,
            params=Params(self.params.w_c, self.params.w_i, self.params.w_beta),
            gmm_k=self.gmm_k, gmm_seed=self.gmm_seed,
            gc_iterations=self.gc_iterations, geo_eps=self.geo_eps)


class CreateSessionRequest(BaseModel):
    image_id: str
    config: ConfigModel = ConfigModel()
    with_gt: bool = True


class StrokeRequest(BaseModel):
    label: Literal["fg", "bg"]
    center: tuple[int, int] | None = None      # (x, y)
    polyline: list[tuple[int, int]] | None = None
    radius: int = Field(4, ge=0, le=64)


class RobotReplayRequest(BaseModel):
    policy: Literal["random", "center", "sensit", "roi", "hamming"] = "center"
    budget: int = Field(20, ge=0, le=200)
    seed: int = 0
    stride: int = Field(2, ge=1)


class UploadImageRequest(BaseModel):
    name: str = ""
    image_png: str                      # base64 PNG
    gt_png: str | None = None
    brush_png: str | None = None


# ---------------------------------------------------------------------------
# Server state
# ---------------------------------------------------------------------------

@dataclass
class ImageRecord:
    id: str
    image: RgbImage
    gt: LabelMap | None
    brush: Trimap | None


@dataclass
class ServerSession:
    id: str
    image_id: str
    config_model: ConfigModel
    with_gt: bool
    engine: object | None
    pending: Trimap
    errors: list[float] = dc_field(default_factory=list)
    stroke_count: int = 0
    created_at: float = dc_field(default_factory=time.time)
    lock: threading.Lock = dc_field(default_factory=threading.Lock)
    last_mask: np.ndarray | None = None


def _decode_png_b64(data: str) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(base64.b64decode(data))))


def _polyline_mask(h: int, w: int, pts: list[tuple[int, int]],
                   radius: int) -> np.ndarray:
    """Stamp disks of the given radius along the polyline at 1-pixel spacing."""
    mask = np.zeros((h, w), bool)
    pts = [(int(y), int(x)) for x, y in pts]  # wire (x, y) -> (row, col)
    if not pts:
        return mask
    stamped = set()
    prev = pts[0]
    chain = [prev]
    for cur in pts[1:]:
        dist = max(abs(cur[0] - prev[0]), abs(cur[1] - prev[1]))
        for i in range(1, dist + 1):
            chain.append((round(prev[0] + (cur[0] - prev[0]) * i / dist),
                          round(prev[1] + (cur[1] - prev[1]) * i / dist)))
        prev = cur
    for r, c in chain:
        if (r, c) in stamped:
            continue
        stamped.add((r, c))
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"polyline point ({c}, {r}) outside {w}x{h} image")
        mask |= disk_mask(h, w, (r, c), radius)
    return mask


class _MaskStroke:
    """Adapter: an arbitrary pixel set applied with stroke overwrite semantics."""

    def __init__(self, label: int, mask: np.ndarray):
        self.label = label
        self._mask = mask

    def pixel_mask(self, h, w):
        return self._mask


def create_app(dataset_root: str | None = None,
               state_dir: str | None = None) -> FastAPI:
    dataset_root = dataset_root or os.environ.get("BRUSHBENCH_DATASET_ROOT")
    state_dir = state_dir or os.environ.get("BRUSHBENCH_STATE_DIR",
                                            "./brushbench-state")
    os.makedirs(os.path.join(state_dir, "sessions"), exist_ok=True)
    os.makedirs(os.path.join(state_dir, "uploads"), exist_ok=True)

    app = FastAPI(title="brushbench session service")
    images: dict[str, ImageRecord] = {}
    sessions: dict[str, ServerSession] = {}
    store_lock = threading.Lock()

    if dataset_root and os.path.isdir(dataset_root):
        for entry in load_dataset(dataset_root):
            images[entry.name] = ImageRecord(entry.name, entry.image, entry.gt,
                                             entry.brush)

    # ---- persistence ------------------------------------------------------

    def _log_path(sid: str) -> str:
        return os.path.join(state_dir, "sessions", f"{sid}.jsonl")

    def _append_event(sid: str, event: dict) -> None:
        with open(_log_path(sid), "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def _uploads_load() -> None:
        updir = os.path.join(state_dir, "uploads")
        names = sorted(f[:-len(".img.png")] for f in os.listdir(updir)
                       if f.endswith(".img.png"))
        for name in names:
            base = os.path.join(updir, name)
            from .data import load_image_png, load_labelmap_png, load_trimap_png
            img = load_image_png(base + ".img.png")
            gt = load_labelmap_png(base + ".gt.png") \
                if os.path.exists(base + ".gt.png") else None
            brush = load_trimap_png(base + ".brush.png") \
                if os.path.exists(base + ".brush.png") else None
            images[name] = ImageRecord(name, img, gt, brush)

    def _make_session(sid: str, req: CreateSessionRequest) -> ServerSession:
        rec = images[req.image_id]
        h, w = rec.image.height, rec.image.width
        pending = rec.brush if rec.brush is not None else Trimap.empty(h, w)
        engine = None
        if pending.has_both_seeds():
            engine = start_session(rec.image, pending, req.config.to_config())
        return ServerSession(id=sid, image_id=req.image_id,
                             config_model=req.config,
                             with_gt=req.with_gt and rec.gt is not None,
                             engine=engine, pending=pending)

    def _apply_stroke(sess: ServerSession, req: StrokeRequest) -> dict:
        rec = images[sess.image_id]
        h, w = rec.image.height, rec.image.width
        label = 1 if req.label == "fg" else 0
        if req.center is not None:
            x, y = req.center
            if not (0 <= x < w and 0 <= y < h):
                raise HTTPException(422, detail=f"center ({x}, {y}) outside "
                                                f"image bounds {w}x{h}")
            stroke = BrushStroke(label, (y, x), req.radius)
        elif req.polyline:
            try:
                mask = _polyline_mask(h, w, req.polyline, req.radius)
            except ValueError as exc:
                raise HTTPException(422, detail=str(exc))
            stroke = _MaskStroke(label, mask)
        else:
            raise HTTPException(422, detail="stroke needs center or polyline")

        t0 = time.perf_counter()
        if sess.engine is None:
            sess.pending = sess.pending.with_stroke(stroke)
            if sess.pending.has_both_seeds():
                sess.engine = start_session(rec.image, sess.pending,
                                            sess.config_model.to_config())
        else:
            sess.engine.add_stroke(stroke)
        sess.stroke_count += 1

        mask_rle = None
        er = None
        if sess.engine is not None:
            seg = sess.engine.segment()
            sess.last_mask = seg.labels
            mask_rle = encode_mask_rle(seg.labels)
            if sess.with_gt:
                er = hamming_error(seg, rec.gt)
                sess.errors.append(er)
        return {
            "stroke_index": sess.stroke_count,
            "mask_rle": mask_rle,
            "width": w,
            "height": h,
            "er_b": er,
            "elapsed_ms": (time.perf_counter() - t0) * 1000.0,
            "echo": req.model_dump(),  # lets clients verify coordinate fidelity
        }

    def _replay_logs() -> None:
        logdir = os.path.join(state_dir, "sessions")
        for fname in sorted(os.listdir(logdir)):
            if not fname.endswith(".jsonl"):
                continue
            sid = fname[:-len(".jsonl")]
            try:
                events = [json.loads(line)
                          for line in open(os.path.join(logdir, fname))]
            except (OSError, json.JSONDecodeError):
                continue
            sess = None
            for ev in events:
                if ev.get("event") == "create" and ev["image_id"] in images:
                    req = CreateSessionRequest(
                        image_id=ev["image_id"],
                        config=ConfigModel(**ev["config"]),
                        with_gt=ev.get("with_gt", True))
                    sess = _make_session(sid, req)
                elif ev.get("event") == "stroke" and sess is not None:
                    _apply_stroke(sess, StrokeRequest(**ev["stroke"]))
            if sess is not None:
                sessions[sid] = sess

    _uploads_load()
    _replay_logs()

    # ---- endpoints --------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok", "images": len(images), "sessions": len(sessions)}

    @app.get("/images")
    def list_images():
        return {"images": [
            {"id": rec.id, "width": rec.image.width, "height": rec.image.height,
             "has_gt": rec.gt is not None, "has_brush": rec.brush is not None}
            for rec in sorted(images.values(), key=lambda r: r.id)]}

    @app.get("/images/{image_id}")
    def get_image(image_id: str):
        rec = images.get(image_id)
        if rec is None:
            raise HTTPException(404, detail=f"unknown image {image_id!r}")
        buf = io.BytesIO()
        Image.fromarray(np.round(rec.image.data * 255).astype(np.uint8)).save(
            buf, format="PNG")
        return {
            "id": rec.id, "width": rec.image.width, "height": rec.image.height,
            "image_png": base64.b64encode(buf.getvalue()).decode("ascii"),
            "has_gt": rec.gt is not None,
        }

    @app.post("/images", status_code=201)
    def upload_image(req: UploadImageRequest):
        try:
            arr = _decode_png_b64(req.image_png)
            if arr.ndim == 2:
                arr = np.stack([arr] * 3, axis=-1)
            img = RgbImage(arr[:, :, :3].astype(np.float64) / 255.0)
            gt = None
            if req.gt_png:
                gt = LabelMap((_decode_png_b64(req.gt_png) >= 128).astype(np.uint8))
                if gt.labels.shape != img.data.shape[:2]:
                    raise ValueError("gt dimensions do not match image")
            brush = None
            if req.brush_png:
                arr_b = _decode_png_b64(req.brush_png)
                from .data import UNLABELED, BG_SEED, FG_SEED
                marks = np.full(arr_b.shape[:2], UNLABELED, np.uint8)
                marks[arr_b <= 64] = BG_SEED
                marks[arr_b >= 192] = FG_SEED
                brush = Trimap(marks)
        except (ValueError, OSError) as exc:
            raise HTTPException(422, detail=f"bad upload: {exc}")
        image_id = req.name or f"upload-{uuid.uuid4().hex[:8]}"
        with store_lock:
            if image_id in images:
                raise HTTPException(409, detail=f"image {image_id!r} exists")
            images[image_id] = ImageRecord(image_id, img, gt, brush)
        updir = os.path.join(state_dir, "uploads")
        from .data import save_image_png, save_labelmap_png, save_trimap_png
        save_image_png(img, os.path.join(updir, image_id + ".img.png"))
        if gt is not None:
            save_labelmap_png(gt, os.path.join(updir, image_id + ".gt.png"))
        if brush is not None:
            save_trimap_png(brush, os.path.join(updir, image_id + ".brush.png"))
        return {"id": image_id, "width": img.width, "height": img.height}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        if req.image_id not in images:
            raise HTTPException(404, detail=f"unknown image {req.image_id!r}")
        try:
            req.config.to_config()
        except ValueError as exc:
            raise HTTPException(422, detail=str(exc))
        sid = uuid.uuid4().hex[:12]
        try:
            sess = _make_session(sid, req)
        except MissingSeedsError as exc:
            raise HTTPException(422, detail=str(exc))
        with store_lock:
            sessions[sid] = sess
        _append_event(sid, {"event": "create", "image_id": req.image_id,
                            "config": req.config.model_dump(),
                            "with_gt": req.with_gt, "ts": time.time()})
        rec = images[req.image_id]
        return {"session_id": sid, "width": rec.image.width,
                "height": rec.image.height,
                "config": req.config.model_dump(),
                "started": sess.engine is not None}

    def _get_session(sid: str) -> ServerSession:
        sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(404, detail=f"unknown session {sid!r}")
        return sess

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        sess = _get_session(sid)
        with sess.lock:
            mask_rle = encode_mask_rle(sess.last_mask) \
                if sess.last_mask is not None else None
            rec = images[sess.image_id]
            return {
                "session_id": sid, "image_id": sess.image_id,
                "config": sess.config_model.model_dump(),
                "with_gt": sess.with_gt,
                "stroke_count": sess.stroke_count,
                "errors": sess.errors,
                "mask_rle": mask_rle,
                "width": rec.image.width, "height": rec.image.height,
                "started": sess.engine is not None,
            }

    @app.post("/sessions/{sid}/strokes")
    def post_stroke(sid: str, req: StrokeRequest):
        sess = _get_session(sid)
        with sess.lock:
            out = _apply_stroke(sess, req)
            _append_event(sid, {"event": "stroke",
                                "stroke": req.model_dump(), "ts": time.time()})
            return out

    @app.post("/sessions/{sid}/robot-replay")
    def robot_replay(sid: str, req: RobotReplayRequest):
        sess = _get_session(sid)
        with sess.lock:
            rec = images[sess.image_id]
            if not sess.with_gt or rec.gt is None:
                raise HTTPException(409, detail="session has no ground truth")
            if sess.engine is None:
                raise HTTPException(409, detail="session not started: needs fg "
                                                "and bg strokes first")
            clone = sess.engine.clone()
        policy = RobotPolicy(req.policy, rng_seed=req.seed, stride=req.stride)
        try:
            trace = run_robot(clone, policy, rec.gt, req.budget)
        except BrushBenchError as exc:
            raise HTTPException(409, detail=str(exc))
        return {
            "errors": trace.errors,
            "trace": [s.to_json_dict() for s in trace.strokes],
        }

    ui_dir = os.path.join(os.path.dirname(__file__), "..", "..", "frontend", "dist")
    ui_dir = os.path.normpath(ui_dir)
    if os.environ.get("BRUSHBENCH_UI_DIR"):
        ui_dir = os.environ["BRUSHBENCH_UI_DIR"]
    if os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

        @app.get("/")
        def index():
            return RedirectResponse("/ui/")

    return app


def main(argv=None) -> int:
    import argparse
    import uvicorn

    ap = argparse.ArgumentParser(description="run the brushbench session service")
    ap.add_argument("--dataset", default=None,
                    help="dataset root (or env BRUSHBENCH_DATASET_ROOT)")
    ap.add_argument("--state-dir", default=None)
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int,
                    default=int(os.environ.get("BRUSHBENCH_PORT", "8008")))
    args = ap.parse_args(argv)
    app = create_app(args.dataset, args.state_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
