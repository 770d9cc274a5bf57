"""FastAPI application implementing the embedding wire protocol.

GET  /health       -> {"name": str, "dim": int}
POST /embed/image  {"image_png_b64": str}    -> {"embedding": [...], "dim": int}
POST /embed/text   {"texts": [str, ...]}     -> {"embeddings": [[...], ...], "dim": int}

Malformed requests answer 400; encoder failures answer 500. Arrays preserve
request order and floats travel at full round-trip precision.
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .encoders import Encoder, build_encoder


@dataclass(frozen=True)
class SidecarConfig:
    host: str = "127.0.0.1"
    port: int = 8099
    mode: str = "stub"
    model: str | None = None


class HealthResponse(BaseModel):
    name: str
    dim: int


class ImageEmbedRequest(BaseModel):
    image_png_b64: str


class ImageEmbedResponse(BaseModel):
    embedding: list[float]
    dim: int


class TextEmbedRequest(BaseModel):
    texts: list[str]


class TextEmbedResponse(BaseModel):
    embeddings: list[list[float]]
    dim: int


def create_app(config: SidecarConfig | None = None, encoder: Encoder | None = None) -> FastAPI:
    if encoder is None:
        config = config if config is not None else SidecarConfig()
        encoder = build_encoder(config.mode, config.model)

    app = FastAPI(title="glare-sidecar", docs_url=None, redoc_url=None)
    app.state.encoder = encoder

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": f"malformed request: {exc.errors()}"})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(name=encoder.name, dim=encoder.dim)

    @app.post("/embed/image", response_model=ImageEmbedResponse)
    def embed_image(req: ImageEmbedRequest) -> ImageEmbedResponse:
        try:
            png_bytes = base64.b64decode(req.image_png_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid base64 payload: {exc}") from exc
        try:
            vector = encoder.embed_image_png(png_bytes)
        except HTTPException:
            raise
        except Exception as exc:
            # Undecodable pixels are the caller's fault; anything else is ours.
            if exc.__class__.__module__.startswith("PIL") or isinstance(exc, (OSError, ValueError)):
                raise HTTPException(status_code=400, detail=f"undecodable PNG: {exc}") from exc
            raise HTTPException(status_code=500, detail=f"encoder failure: {exc}") from exc
        return ImageEmbedResponse(embedding=vector, dim=encoder.dim)

    @app.post("/embed/text", response_model=TextEmbedResponse)
    def embed_text(req: TextEmbedRequest) -> TextEmbedResponse:
        if not req.texts:
            raise HTTPException(status_code=400, detail="texts must be non-empty")
        if any(not t for t in req.texts):
            raise HTTPException(status_code=400, detail="text entries must be non-empty strings")
        try:
            vectors = encoder.embed_texts(req.texts)
        except Exception as exc:
            raise HTTPException(status_code=500, detail=f"encoder failure: {exc}") from exc
        return TextEmbedResponse(embeddings=vectors, dim=encoder.dim)

    return app
