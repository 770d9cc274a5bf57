"""Encoder backends behind the embedding endpoints.

Stub mode reuses the attack toolkit's own local provider, so a client talking
to this service gets bit-for-bit the vectors it would have computed locally.
Real mode loads a pretrained vision-language encoder and returns its raw
(unnormalized) embeddings; cosine similarity on the client side makes the
scale immaterial.
"""

from __future__ import annotations

import io
from typing import Protocol, Sequence

import numpy as np
from PIL import Image

from glare.lightfield import ImageBuffer
from glare.providers import EMBEDDING_DIM, local_embed_image, local_embed_texts

DEFAULT_REAL_MODEL = "clip-ViT-B-32"


class Encoder(Protocol):
    name: str
    dim: int

    def embed_image_png(self, png_bytes: bytes) -> list[float]: ...

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]: ...


def decode_png_rgb(png_bytes: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(png_bytes)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


class StubEncoder:
    """Deterministic echo of the toolkit's local provider."""

    name = "stub"
    dim = EMBEDDING_DIM

    def embed_image_png(self, png_bytes: bytes) -> list[float]:
        arr = decode_png_rgb(png_bytes)
        buffer = ImageBuffer(arr.astype(np.float64) / 255.0)
        return local_embed_image(buffer).tolist()

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        return local_embed_texts(list(texts)).tolist()


class RealEncoder:
    """Pretrained CLIP-family encoder via sentence-transformers."""

    def __init__(self, model_id: str = DEFAULT_REAL_MODEL):
        from sentence_transformers import SentenceTransformer

        self.name = model_id
        self._model = SentenceTransformer(model_id)
        probe = self._model.encode(["probe"], normalize_embeddings=False)
        self.dim = int(np.asarray(probe).shape[-1])

    def embed_image_png(self, png_bytes: bytes) -> list[float]:
        with Image.open(io.BytesIO(png_bytes)) as im:
            image = im.convert("RGB")
            vec = self._model.encode([image], normalize_embeddings=False)[0]
        return np.asarray(vec, dtype=np.float64).tolist()

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        vecs = self._model.encode(list(texts), normalize_embeddings=False)
        return np.asarray(vecs, dtype=np.float64).tolist()


def build_encoder(mode: str, model_id: str | None = None) -> Encoder:
    if mode == "stub":
        return StubEncoder()
    if mode == "real":
        return RealEncoder(model_id or DEFAULT_REAL_MODEL)
    raise ValueError(f"unknown encoder mode {mode!r} (expected 'stub' or 'real')")
