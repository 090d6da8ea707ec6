"""HTTP blending service: upload content once, then blend by weights.

The app wraps one loaded checkpoint. Content images are uploaded once and
addressed by the SHA-256 of the uploaded bytes, so interactive clients
re-send only weight maps. Responses are deterministic for identical inputs;
an LRU cache keyed on (content id, exact normalized weights) short-circuits
repeat blends without changing any response byte.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import zipfile
from collections import OrderedDict

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .autodiff import Tensor
from .checkpoint import CheckpointBundle
from .errors import ImageFormatError, PasticheError
from .imageio import center_crop, decode_image, encode_png, resize_smaller_side
from .losses import style_loss
from .network import count_parameters, forward
from .styles import blend_styles, validate_blend_weights

CACHE_SIZE = 64


class HealthResponse(BaseModel):
    status: str


class StylesResponse(BaseModel):
    styles: list[str]
    per_style_parameters: int
    loss_caches: list[str]


class ContentResponse(BaseModel):
    content_id: str
    width: int
    height: int


class BlendRequest(BaseModel):
    content_id: str
    weights: dict[str, float]


class StylizeRequest(BaseModel):
    content_id: str
    style: str | None = None


class SweepRequest(BaseModel):
    content_id: str
    style_a: str
    style_b: str
    steps: int = Field(default=5, ge=2, le=33)
    format: str = "zip"


class SweepFrame(BaseModel):
    alpha: float
    style_loss_a: float
    style_loss_b: float
    png_base64: str


class SweepResponse(BaseModel):
    frames: list[SweepFrame]


def _http_error(status: int, exc: PasticheError) -> HTTPException:
    return HTTPException(status, detail={"error": exc.code, "message": str(exc)})


class _Blender:
    """Model + uploaded content + response cache behind one lock."""

    def __init__(self, bundle: CheckpointBundle):
        self.bundle = bundle
        self.fx = bundle.feature_extractor()
        self.contents: dict[str, Tensor] = {}
        self.cache: OrderedDict[tuple, bytes] = OrderedDict()
        self.lock = threading.Lock()

    def add_content(self, raw: bytes) -> ContentResponse:
        image = decode_image(raw)
        size = self.bundle.model.config.image_size
        image = resize_smaller_side(image, size)
        image = center_crop(image, size)
        content_id = hashlib.sha256(raw).hexdigest()
        with self.lock:
            self.contents[content_id] = image
        _, _, h, w = image.shape
        return ContentResponse(content_id=content_id, width=w, height=h)

    def content(self, content_id: str) -> Tensor:
        with self.lock:
            image = self.contents.get(content_id)
        if image is None:
            raise HTTPException(
                404,
                detail={"error": "unknown-content", "message": f"no content {content_id!r}"},
            )
        return image

    def blend_png(self, content_id: str, weights: dict[str, float]) -> bytes:
        try:
            normalized = validate_blend_weights(self.bundle.model.bank, weights)
        except PasticheError as exc:
            raise _http_error(400 if exc.code == "bad-weights" else 404, exc) from None
        key = (content_id, tuple(sorted(normalized.items())))
        with self.lock:
            if key in self.cache:
                self.cache.move_to_end(key)
                return self.cache[key]
        content = self.content(content_id)
        vector = blend_styles(self.bundle.model.bank, weights)
        png = encode_png(forward(self.bundle.model, content, [vector]))
        with self.lock:
            self.cache[key] = png
            self.cache.move_to_end(key)
            while len(self.cache) > CACHE_SIZE:
                self.cache.popitem(last=False)
        return png

    def sweep(self, req: SweepRequest) -> list[tuple[float, float, float, bytes]]:
        for name in (req.style_a, req.style_b):
            if name not in self.bundle.model.bank.style_names:
                raise HTTPException(
                    404,
                    detail={"error": "unknown-style", "message": f"no style {name!r}"},
                )
            if name not in self.bundle.grams:
                raise HTTPException(
                    409,
                    detail={
                        "error": "missing-loss-cache",
                        "message": f"checkpoint lacks style statistics for {name!r}",
                    },
                )
        content = self.content(req.content_id)
        frames = []
        for i in range(req.steps):
            alpha = i / (req.steps - 1)
            weights = {req.style_a: alpha, req.style_b: 1.0 - alpha}
            vector = blend_styles(self.bundle.model.bank, weights)
            pastiche = forward(self.bundle.model, content, [vector])
            loss_a, _ = style_loss(self.fx, pastiche, self.bundle.grams[req.style_a])
            loss_b, _ = style_loss(self.fx, pastiche, self.bundle.grams[req.style_b])
            frames.append(
                (alpha, float(loss_a.data), float(loss_b.data), encode_png(pastiche))
            )
        return frames


def create_app(bundle: CheckpointBundle) -> FastAPI:
    app = FastAPI(title="pastiche", version="1")
    # The browser UI is served separately (any static file server), so the
    # API answers cross-origin requests.  Weights are not secrets.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    blender = _Blender(bundle)

    @app.get("/api/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok")

    @app.get("/api/styles", response_model=StylesResponse)
    def styles() -> StylesResponse:
        counts = count_parameters(bundle.model)
        return StylesResponse(
            styles=list(bundle.model.bank.style_names),
            per_style_parameters=counts.per_style,
            loss_caches=sorted(bundle.grams),
        )

    @app.post("/api/content", response_model=ContentResponse)
    async def upload_content(request: Request) -> ContentResponse:
        raw = await request.body()
        try:
            return blender.add_content(raw)
        except ImageFormatError as exc:
            raise _http_error(400, exc) from None

    @app.post("/api/blend")
    def blend(req: BlendRequest) -> Response:
        png = blender.blend_png(req.content_id, req.weights)
        return Response(content=png, media_type="image/png")

    @app.post("/api/stylize")
    def stylize(req: StylizeRequest, style: str | None = None) -> Response:
        name = style or req.style
        if not name:
            raise HTTPException(
                400,
                detail={"error": "bad-weights", "message": "no style given"},
            )
        png = blender.blend_png(req.content_id, {name: 1.0})
        return Response(content=png, media_type="image/png")

    @app.post("/api/sweep")
    def sweep(req: SweepRequest) -> Response:
        frames = blender.sweep(req)
        if req.format == "json":
            payload = SweepResponse(
                frames=[
                    SweepFrame(
                        alpha=alpha,
                        style_loss_a=la,
                        style_loss_b=lb,
                        png_base64=base64.b64encode(png).decode(),
                    )
                    for alpha, la, lb, png in frames
                ]
            )
            return Response(
                content=payload.model_dump_json(), media_type="application/json"
            )
        if req.format != "zip":
            raise HTTPException(
                400,
                detail={"error": "bad-config", "message": f"format {req.format!r}?"},
            )
        records = []
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", zipfile.ZIP_STORED) as archive:
            for i, (alpha, la, lb, png) in enumerate(frames):
                name = f"frame_{i:03d}.png"
                archive.writestr(name, png)
                records.append(
                    {"alpha": alpha, "style_loss_a": la, "style_loss_b": lb, "file": name}
                )
            archive.writestr("records.json", json.dumps({"frames": records}, indent=2))
        return Response(content=buffer.getvalue(), media_type="application/zip")

    return app
