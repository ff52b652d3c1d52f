"""HTTP service exposing extraction, matching, and edit propagation.

State is a per-process session: uploaded images, one global backend, and a
feature cache. Heatmaps travel as base64 float16 arrays with dims in the
envelope; clients colorize.
"""

from __future__ import annotations

import base64
import io
import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel

from . import presets as presets_mod
from .backend import (
    ExtractionConfig,
    FeatureCache,
    FeatureExtractor,
    ToyDenoiserClient,
)
from .core import ImageRef, Point2D
from .editprop import EditLayer, PropagationError, propagate_edit
from .imageio import image_from_pil
from .matching import best_match


class SessionState:
    """Uploaded images and the cache-aware extractor behind all endpoints."""

    def __init__(self, extractor: FeatureExtractor):
        self.images: dict[str, ImageRef] = {}
        self.extractor = extractor
        self.lock = threading.Lock()

    def register(self, image: ImageRef) -> None:
        with self.lock:
            self.images[image.id] = image

    def get(self, image_id: str) -> ImageRef:
        with self.lock:
            img = self.images.get(image_id)
        if img is None:
            raise HTTPException(404, f"unknown image id {image_id!r}")
        return img


class MatchRequest(BaseModel):
    source_id: str
    target_id: str
    point: tuple[float, float]
    config: dict = {}


class EditPropagateRequest(BaseModel):
    source_id: str
    target_ids: list[str]
    edit_png: str  # base64 RGBA PNG
    mask_png: str  # base64 binary mask PNG
    config: dict = {}


def _config_from_dict(d: dict) -> ExtractionConfig:
    try:
        return ExtractionConfig(
            t=int(d.get("t", 0)),
            block_index=int(d.get("block", d.get("block_index", 0))),
            prompt=str(d.get("prompt", "")),
            ensemble_size=int(d.get("ensemble_size", 1)),
            rng_seed=int(d.get("rng_seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise HTTPException(422, f"invalid config: {exc}") from exc


def _encode_heatmap(values: np.ndarray) -> dict:
    lo, hi = float(values.min()), float(values.max())
    norm = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    payload = base64.b64encode(norm.astype("<f2").tobytes()).decode()
    return {
        "height": values.shape[0],
        "width": values.shape[1],
        "dtype": "float16",
        "data": payload,
        "raw_min": lo,
        "raw_max": hi,
    }


def _decode_png(b64: str, mode: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(base64.b64decode(b64))) as im:
            return np.asarray(im.convert(mode), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, ValueError, OSError) as exc:
        raise HTTPException(422, f"undecodable PNG payload: {exc}") from exc


def _encode_png(rgb: np.ndarray) -> str:
    arr = np.clip(rgb * 255.0 + 0.5, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def create_app(
    extractor: FeatureExtractor | None = None, cache_dir: str | None = None
) -> FastAPI:
    if extractor is None:
        cache_dir = cache_dir or os.environ.get("DIFT_CACHE_DIR")
        cache = FeatureCache(cache_dir) if cache_dir else None
        extractor = FeatureExtractor(ToyDenoiserClient(), cache)
    state = SessionState(extractor)
    app = FastAPI(title="diffcorr")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.session = state

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "backend": state.extractor.client.backend_id}

    @app.get("/presets")
    def get_presets():
        return presets_mod.load_presets()

    @app.post("/images")
    async def upload_image(file: UploadFile = File(...)):
        data = await file.read()
        try:
            with Image.open(io.BytesIO(data)) as im:
                img = image_from_pil(im, uuid.uuid4().hex)
        except UnidentifiedImageError as exc:
            raise HTTPException(415, "undecodable image") from exc
        except ValueError as exc:
            raise HTTPException(413, str(exc)) from exc
        state.register(img)
        return {"id": img.id, "height": img.height_px, "width": img.width_px}

    @app.post("/match")
    def match(req: MatchRequest):
        src = state.get(req.source_id)
        tgt = state.get(req.target_id)
        p = Point2D(*req.point)
        if not src.contains(p):
            raise HTTPException(422, f"point {req.point} outside source image")
        cfg = _config_from_dict(req.config)
        try:
            f_src = state.extractor(src, cfg)
            f_tgt = state.extractor(tgt, cfg)
            result, smap = best_match(f_src, p, f_tgt)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        except RuntimeError as exc:
            raise HTTPException(503, f"backend unavailable: {exc}") from exc
        return {
            "source_point": [result.source_point.x, result.source_point.y],
            "target_point": [result.target_point.x, result.target_point.y],
            "similarity": result.similarity,
            "heatmap": _encode_heatmap(smap.values),
        }

    @app.post("/edit-propagate")
    def edit_propagate(req: EditPropagateRequest):
        src = state.get(req.source_id)
        rgba = _decode_png(req.edit_png, "RGBA")
        mask = _decode_png(req.mask_png, "L") > 0.5
        if rgba.shape[:2] != (src.height_px, src.width_px):
            raise HTTPException(422, "edit layer dims must match source image")
        rgba = rgba.copy()
        rgba[..., 3][~mask] = 0.0
        try:
            edit = EditLayer(rgba, mask)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        cfg = _config_from_dict(req.config)
        results = []
        for tid in req.target_ids:
            entry: dict = {"target_id": tid}
            try:
                tgt = state.get(tid)
                res = propagate_edit(src, edit, tgt, state.extractor, cfg)
                entry["composite_png"] = _encode_png(res.composite)
                entry["homography"] = res.homography.H.tolist()
                entry["diagnostics"] = {
                    "sampled_points": [[p.x, p.y] for p in res.sampled_points],
                    "matches": [
                        [[a.x, a.y], [b.x, b.y], s] for a, b, s in res.matches
                    ],
                    "inlier_mask": res.inlier_mask.tolist(),
                }
            except HTTPException as exc:
                entry["error"] = exc.detail
            except (PropagationError, ValueError) as exc:
                entry["error"] = str(exc)
            results.append(entry)
        return {"results": results}

    return app
