"""Session-oriented HTTP service tying the pipeline together.

Upload a photo, get back per-element contributions and categories for
overlay rendering; flip categories; trigger clutter removal; fetch the
cleaned preview and confidence map. Sessions live in a directory of JSON
metadata plus PNG blobs, so a restarted service picks up exactly where it
left off. Masks travel as run-length strings; the web client decodes them.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, fields

import numpy as np
import yaml
from fastapi import FastAPI, HTTPException, UploadFile
from fastapi.responses import FileResponse

from .errors import BackendUnavailableError, ProtocolError
from .imaging import load_image, png_bytes_to_image, save_gray, save_image
from .inpaint import Generator, iterative_inpaint, load_inpaint_checkpoint
from .policy import (
    OverrideLedger,
    SuggestionPolicy,
    effective_categories,
    select_clutter,
    suggest,
)
from .rle import decode_rle, encode_rle
from .scoring import (
    MixingWeights,
    ScoreModel,
    SceneAssessment,
    TinyBackbone,
    analyze_scene,
    load_score_checkpoint,
)
from .segmentation import DEFAULT_TAXONOMY, ExternalSegmenter, SyntheticSegmenter

ENV_PREFIX = "DECLUTTER_"


@dataclass
class ServiceConfig:
    """Everything the service needs to run; YAML-loadable, env-overridable."""

    host: str = "127.0.0.1"
    port: int = 8000
    score_checkpoint: str | None = None
    inpaint_checkpoint: str | None = None
    segmenter_url: str | None = None
    area_threshold: float = 0.05
    boundary_margin: float = 0.10
    accept_threshold: float = 0.5
    max_iterations: int = 5
    session_store: str = "sessions"
    max_image_side: int = 4096

    @classmethod
    def from_yaml(cls, path, environ=None) -> "ServiceConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**raw)
        return apply_env_overrides(config, environ)


def apply_env_overrides(config: ServiceConfig, environ=None) -> ServiceConfig:
    """DECLUTTER_<FIELD> variables replace file values, coerced by field type."""
    environ = os.environ if environ is None else environ
    for f in fields(config):
        key = ENV_PREFIX + f.name.upper()
        if key not in environ:
            continue
        raw = environ[key]
        if f.name in ("port", "max_iterations", "max_image_side"):
            value = int(raw)
        elif f.name in ("area_threshold", "boundary_margin", "accept_threshold"):
            value = float(raw)
        else:
            value = raw
        setattr(config, f.name, value)
    return config


class SessionStore:
    """Directory-backed sessions: one folder per id with JSON + PNG blobs.

    Every request reads from disk under the session's lock, so state
    survives restarts for free and concurrent requests within a session
    serialize while distinct sessions proceed in parallel.
    """

    def __init__(self, root):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)
        self._locks: dict = {}
        self._locks_guard = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def path(self, session_id: str, name: str = "") -> str:
        return os.path.join(self.root, session_id, name)

    def exists(self, session_id: str) -> bool:
        return os.path.isfile(self.path(session_id, "meta.json"))

    def create(self, meta: dict, image: np.ndarray) -> None:
        folder = self.path(meta["id"])
        os.makedirs(folder, exist_ok=True)
        save_image(image, os.path.join(folder, "image.png"))
        self.write_meta(meta["id"], meta)

    def write_meta(self, session_id: str, meta: dict) -> None:
        tmp = self.path(session_id, "meta.json.tmp")
        with open(tmp, "w") as fh:
            json.dump(meta, fh, sort_keys=True)
        os.replace(tmp, self.path(session_id, "meta.json"))

    def read_meta(self, session_id: str) -> dict:
        with open(self.path(session_id, "meta.json")) as fh:
            return json.load(fh)

    def read_image(self, session_id: str) -> np.ndarray:
        return load_image(self.path(session_id, "image.png"))


def _assessment_payload(masks, assessment, taxonomy) -> list:
    elements = []
    for i, mask in enumerate(masks.masks):
        r0, c0, r1, c1 = mask.bounding_box()
        elements.append(
            {
                "index": mask.index,
                "label": int(mask.label),
                "label_name": taxonomy.name_of(mask.label),
                "bbox": [int(r0), int(c0), int(r1), int(c1)],
                "rle_mask": encode_rle(mask.mask),
                "q": float(assessment.contributions[i]),
                "category": assessment.categories[i],
            }
        )
    return elements


def _rebuild_assessment(meta: dict) -> SceneAssessment:
    from .scoring import ElementScores

    elements = meta["elements"]
    return SceneAssessment(
        element_scores=[
            ElementScores(aes=e["score_aes"], content=e["score_content"]) for e in elements
        ],
        weights=MixingWeights(
            beta=np.array(meta["weights"]["beta"], dtype=np.float64),
            gamma=np.array(meta["weights"]["gamma"], dtype=np.float64),
        ),
        overall_aes=meta["overall"]["aes"],
        overall_content=meta["overall"]["content"],
        contributions=np.array([e["q"] for e in elements], dtype=np.float64),
        categories=[e["category"] for e in elements],
    )


def _rebuild_masks(meta: dict):
    from .imaging import ElementMask, MaskSet

    h, w = meta["height"], meta["width"]
    masks = [
        ElementMask(index=e["index"], label=e["label"], mask=decode_rle(e["rle_mask"], h, w))
        for e in meta["elements"]
    ]
    return MaskSet(masks=masks, height=h, width=w)


def _session_view(meta: dict) -> dict:
    """Client-facing session payload: stored state + effective categories."""
    ledger = OverrideLedger.from_json(meta["ledger"])
    view = {
        "id": meta["id"],
        "k": meta["k"],
        "width": meta["width"],
        "height": meta["height"],
        "created_at": meta["created_at"],
        "updated_at": meta["updated_at"],
        "overall": meta["overall"],
        "elements": [dict(e) for e in meta["elements"]],
        "last_clean": meta.get("last_clean"),
    }
    if meta["k"]:
        assessment = _rebuild_assessment(meta)
        effective = effective_categories(assessment, ledger)
        for e, cat in zip(view["elements"], effective):
            e["category"] = cat
    return view


def create_app(
    config: ServiceConfig | None = None,
    score_model: ScoreModel | None = None,
    generator: Generator | None = None,
    segmenter=None,
) -> FastAPI:
    """Assemble the HTTP app around pinned or checkpoint-loaded models."""
    config = config or ServiceConfig()
    if score_model is None:
        if config.score_checkpoint:
            score_model = load_score_checkpoint(config.score_checkpoint)
        else:
            score_model = ScoreModel(TinyBackbone(), input_resolution=64)
    if generator is None:
        if config.inpaint_checkpoint:
            generator, _, _ = load_inpaint_checkpoint(config.inpaint_checkpoint)
        else:
            generator = Generator(
                encoder_channels=(8, 8, 16, 16),
                decoder_channels=(16, 16, 8, 6, 3),
                confidence_hidden=4,
                native_resolution=256,
            )
    if segmenter is None:
        if config.segmenter_url:
            segmenter = ExternalSegmenter(config.segmenter_url)
        else:
            segmenter = SyntheticSegmenter(detect_regions=True)
    score_model.eval()
    generator.eval()
    policy = SuggestionPolicy(
        area_threshold=config.area_threshold, boundary_margin=config.boundary_margin
    )
    store = SessionStore(config.session_store)
    taxonomy = DEFAULT_TAXONOMY
    app = FastAPI(title="declutter", version="0.1.0")
    app.state.config = config
    app.state.store = store

    def _get_meta_or_404(session_id: str) -> dict:
        if not store.exists(session_id):
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return store.read_meta(session_id)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    async def create_session(image: UploadFile):
        blob = await image.read()
        try:
            decoded = png_bytes_to_image(blob)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"undecodable image: {exc}")
        h, w = decoded.shape[:2]
        if max(h, w) > config.max_image_side:
            raise HTTPException(
                status_code=400,
                detail=f"image side {max(h, w)} exceeds limit {config.max_image_side}",
            )
        try:
            masks = segmenter.segment(decoded)
        except BackendUnavailableError as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        except ProtocolError as exc:
            raise HTTPException(status_code=502, detail=str(exc))

        now = time.time()
        session_id = uuid.uuid4().hex
        meta = {
            "id": session_id,
            "k": len(masks),
            "width": w,
            "height": h,
            "created_at": now,
            "updated_at": now,
            "ledger": OverrideLedger().to_json(),
            "elements": [],
            "overall": {"aes": None, "content": None},
            "weights": {"beta": [], "gamma": []},
            "last_clean": None,
        }
        if len(masks):
            assessment = analyze_scene(decoded, masks, score_model)
            elements = _assessment_payload(masks, assessment, taxonomy)
            for e, s in zip(elements, assessment.element_scores):
                e["score_aes"] = float(s.aes)
                e["score_content"] = float(s.content)
            meta["elements"] = elements
            meta["overall"] = {
                "aes": float(assessment.overall_aes),
                "content": float(assessment.overall_content),
            }
            meta["weights"] = {
                "beta": [float(b) for b in assessment.weights.beta],
                "gamma": [float(g) for g in assessment.weights.gamma],
            }
        with store.lock(session_id):
            store.create(meta, decoded)
        return _session_view(meta)

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        with store.lock(session_id):
            meta = _get_meta_or_404(session_id)
            return _session_view(meta)

    @app.post("/v1/sessions/{session_id}/overrides")
    def post_override(session_id: str, body: dict):
        index = body.get("index")
        category = body.get("category")
        with store.lock(session_id):
            meta = _get_meta_or_404(session_id)
            if not isinstance(index, int) or not 1 <= index <= meta["k"]:
                raise HTTPException(
                    status_code=400, detail=f"index must be in 1..{meta['k']}, got {index!r}"
                )
            ledger = OverrideLedger.from_json(meta["ledger"])
            try:
                ledger.set(index, category)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            meta["ledger"] = ledger.to_json()
            meta["updated_at"] = time.time()
            store.write_meta(session_id, meta)
            view = _session_view(meta)
        return {"id": session_id, "categories": [e["category"] for e in view["elements"]]}

    @app.post("/v1/sessions/{session_id}/clean")
    def post_clean(session_id: str):
        with store.lock(session_id):
            meta = _get_meta_or_404(session_id)
            original = store.read_image(session_id)
            preview_path = store.path(session_id, "preview.png")
            confidence_path = store.path(session_id, "confidence.png")
            if meta["k"] == 0:
                selection_empty = True
            else:
                assessment = _rebuild_assessment(meta)
                ledger = OverrideLedger.from_json(meta["ledger"])
                masks = _rebuild_masks(meta)
                selection = select_clutter(assessment, ledger, masks)
                selection_empty = len(selection) == 0
            if selection_empty:
                save_image(original, preview_path)
                meta["last_clean"] = {
                    "status": "nothing-to-remove",
                    "iterations_used": 0,
                    "selected_indices": [],
                }
            else:
                result = iterative_inpaint(
                    original,
                    selection.union_mask,
                    generator=generator,
                    max_iterations=config.max_iterations,
                    accept_threshold=config.accept_threshold,
                )
                save_image(result.final_image, preview_path)
                save_gray(result.per_iteration[-1].confidence_map, confidence_path)
                meta["last_clean"] = {
                    "status": "cleaned",
                    "iterations_used": result.iterations_used,
                    "selected_indices": [int(i) for i in selection.indices],
                }
            meta["updated_at"] = time.time()
            store.write_meta(session_id, meta)
        out = dict(meta["last_clean"])
        out["preview_url"] = f"/v1/sessions/{session_id}/preview.png"
        if out["status"] == "cleaned":
            out["confidence_url"] = f"/v1/sessions/{session_id}/confidence.png"
        return out

    @app.get("/v1/sessions/{session_id}/elements/{index}/suggestions")
    def get_suggestions(session_id: str, index: int):
        with store.lock(session_id):
            meta = _get_meta_or_404(session_id)
            if not 1 <= index <= meta["k"]:
                raise HTTPException(
                    status_code=400, detail=f"index must be in 1..{meta['k']}, got {index}"
                )
            view = _session_view(meta)
            category = view["elements"][index - 1]["category"]
            masks = _rebuild_masks(meta)
        items = suggest(masks.masks[index - 1], category, policy)
        return {"index": index, "category": category, "suggestions": [
            {"kind": s.kind, "rationale": s.rationale} for s in items
        ]}

    def _blob_or_404(session_id: str, name: str, media_type: str):
        with store.lock(session_id):
            _get_meta_or_404(session_id)
            path = store.path(session_id, name)
            if not os.path.isfile(path):
                raise HTTPException(status_code=404, detail=f"{name} not generated yet")
        return FileResponse(path, media_type=media_type)

    @app.get("/v1/sessions/{session_id}/preview.png")
    def get_preview(session_id: str):
        return _blob_or_404(session_id, "preview.png", "image/png")

    @app.get("/v1/sessions/{session_id}/confidence.png")
    def get_confidence(session_id: str):
        return _blob_or_404(session_id, "confidence.png", "image/png")

    return app


def run_service(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
