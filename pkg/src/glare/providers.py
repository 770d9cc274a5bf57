"""Victim-model abstraction: embedding providers and perceptual feature extraction.

The local provider is a deliberately illumination-sensitive toy encoder
(luminance statistics dominate the embedding), so offline attack runs exercise
the full pipeline meaningfully. The remote provider speaks a small HTTP
protocol to a scoring service hosting a real encoder.

Both image paths operate on the 8-bit quantized pixels: the wire format ships
PNG bytes, so quantizing locally keeps local and remote-stub evaluations
bit-for-bit identical.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import InvalidArgumentError, ProtocolError, TransportError
from .lightfield import ImageBuffer

EMBEDDING_DIM = 96
GRID_CELLS = 4          # 4x4 spatial grid of color/gradient statistics
HIST_BINS = 8           # per-quadrant luminance histogram bins
PYRAMID_FACTORS = (2, 4, 8)

# Fixed salt for the text-embedding hash expansion; changing it changes every
# text embedding, so it is part of the provider's published contract.
TEXT_EMBED_SALT = b"glare-text-embed-v1"

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class EmbeddingProvider(Protocol):
    """Deterministic image/text encoders with a fixed embedding dimension."""

    name: str
    embedding_dim: int

    def embed_image(self, img: ImageBuffer) -> np.ndarray: ...

    def embed_texts(self, labels: Sequence[str]) -> np.ndarray: ...


def quantize_unit(values: np.ndarray) -> np.ndarray:
    """Snap [0,1] floats to the 8-bit grid (round half up), staying in [0,1]."""
    levels = np.floor(values * 255.0 + 0.5)
    return np.clip(levels, 0.0, 255.0) / 255.0


def luminance(img_values: np.ndarray) -> np.ndarray:
    r, g, b = LUMA_WEIGHTS
    return r * img_values[..., 0] + g * img_values[..., 1] + b * img_values[..., 2]


def _segment_means(arr: np.ndarray, n_row: int, n_col: int) -> np.ndarray:
    """Mean of arr over an n_row x n_col grid of cells; empty cells mean 0."""
    h, w = arr.shape
    row_edges = (np.arange(n_row + 1) * h) // n_row
    col_edges = (np.arange(n_col + 1) * w) // n_col
    out = np.zeros((n_row, n_col), dtype=np.float64)
    for i in range(n_row):
        r0, r1 = row_edges[i], row_edges[i + 1]
        for j in range(n_col):
            c0, c1 = col_edges[j], col_edges[j + 1]
            if r1 > r0 and c1 > c0:
                out[i, j] = arr[r0:r1, c0:c1].mean()
    return out


def _quadrant_histograms(lum: np.ndarray) -> np.ndarray:
    """8-bin luminance mass per image quadrant, row-major quadrant order."""
    h, w = lum.shape
    rows = ((0, h // 2), (h // 2, h))
    cols = ((0, w // 2), (w // 2, w))
    feats = np.zeros(4 * HIST_BINS, dtype=np.float64)
    k = 0
    for r0, r1 in rows:
        for c0, c1 in cols:
            block = lum[r0:r1, c0:c1]
            if block.size:
                idx = np.minimum((block * HIST_BINS).astype(np.int64), HIST_BINS - 1)
                counts = np.bincount(idx.ravel(), minlength=HIST_BINS).astype(np.float64)
                feats[k : k + HIST_BINS] = counts / block.size
            k += HIST_BINS
    return feats


def local_embed_image(img: ImageBuffer) -> np.ndarray:
    """96-dim deterministic image embedding, L2-normalized.

    Layout: 16 grid cells x (mean R, mean G, mean B, mean gradient magnitude),
    then 4 quadrants x 8 luminance-histogram bins. Computed on the 8-bit
    quantized pixels so the PNG wire path reproduces it exactly.
    """
    vals = quantize_unit(img.values)
    lum = luminance(vals)
    gy = np.gradient(lum, axis=0) if lum.shape[0] > 1 else np.zeros_like(lum)
    gx = np.gradient(lum, axis=1) if lum.shape[1] > 1 else np.zeros_like(lum)
    grad_mag = np.hypot(gx, gy)

    cell_feats = np.zeros((GRID_CELLS, GRID_CELLS, 4), dtype=np.float64)
    for c in range(3):
        cell_feats[:, :, c] = _segment_means(vals[:, :, c], GRID_CELLS, GRID_CELLS)
    cell_feats[:, :, 3] = _segment_means(grad_mag, GRID_CELLS, GRID_CELLS)

    vec = np.concatenate([cell_feats.reshape(-1), _quadrant_histograms(lum)])
    return vec / np.linalg.norm(vec)


def _hash_normals(label: str, count: int) -> np.ndarray:
    """Expand a label into `count` platform-stable pseudo-random normals.

    Counter-mode BLAKE2b over the salted label yields uniform 64-bit words,
    turned Gaussian by Box-Muller; stdlib only, so the mapping never depends
    on a numerics library's generator streams.
    """
    normals = np.empty(count, dtype=np.float64)
    produced = 0
    block = 0
    pending: list[float] = []
    while produced < count:
        if not pending:
            digest = hashlib.blake2b(
                label.encode("utf-8") + b"\x00" + struct.pack("<Q", block),
                key=TEXT_EMBED_SALT,
            ).digest()
            words = struct.unpack("<8Q", digest)
            for a, b in zip(words[0::2], words[1::2]):
                u1 = (a + 1) / 18446744073709551617.0  # (0, 1]
                u2 = b / 18446744073709551616.0        # [0, 1)
                r = math.sqrt(-2.0 * math.log(u1))
                pending.append(r * math.cos(2.0 * math.pi * u2))
                pending.append(r * math.sin(2.0 * math.pi * u2))
            block += 1
        normals[produced] = pending.pop(0)
        produced += 1
    return normals


def local_embed_text(label: str) -> np.ndarray:
    """Deterministic 96-dim unit vector for one label string."""
    if not label:
        raise InvalidArgumentError("label strings must be non-empty")
    vec = _hash_normals(label, EMBEDDING_DIM)
    return vec / np.linalg.norm(vec)


def local_embed_texts(labels: Sequence[str]) -> np.ndarray:
    """Stack of per-label embeddings in input order, shape (n, 96)."""
    if len(labels) == 0:
        raise InvalidArgumentError("label list must be non-empty")
    return np.stack([local_embed_text(lab) for lab in labels])


class LocalEmbeddingProvider:
    """Self-contained provider; pure functions of the inputs, safe to share."""

    name = "local"
    embedding_dim = EMBEDDING_DIM

    def embed_image(self, img: ImageBuffer) -> np.ndarray:
        return local_embed_image(img)

    def embed_texts(self, labels: Sequence[str]) -> np.ndarray:
        return local_embed_texts(labels)


def _box_downsample(arr: np.ndarray, factor: int) -> np.ndarray:
    h = (arr.shape[0] // factor) * factor
    w = (arr.shape[1] // factor) * factor
    trimmed = arr[:h, :w]
    return trimmed.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def pyramid_features(img: ImageBuffer) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Three-level luminance pyramid with finite-difference channels.

    Level k holds the luminance box-downsampled by PYRAMID_FACTORS[k] plus its
    horizontal and vertical forward differences; every channel of a level is
    scaled by 1/sqrt(pixel count of that level) so the levels contribute on
    comparable scales.
    """
    if min(img.height, img.width) < 8:
        raise InvalidArgumentError(
            f"pyramid features need min dimension >= 8, got {img.height}x{img.width}"
        )
    lum = luminance(img.values)
    levels = []
    for factor in PYRAMID_FACTORS:
        ds = _box_downsample(lum, factor)
        scale = 1.0 / math.sqrt(ds.size)
        dx = ds[:, 1:] - ds[:, :-1]
        dy = ds[1:, :] - ds[:-1, :]
        levels.append((ds * scale, dx * scale, dy * scale))
    return levels


class PyramidFeatureExtractor:
    """Deterministic perceptual feature extractor over three pyramid levels."""

    layer_count = len(PYRAMID_FACTORS)

    def extract(self, img: ImageBuffer) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        return pyramid_features(img)


@dataclass(frozen=True)
class RemoteEndpoint:
    """Where the scoring service lives and how patiently to talk to it."""

    base_url: str
    timeout_ms: int = 10_000
    retries: int = 2

    def __post_init__(self) -> None:
        if not self.base_url:
            raise InvalidArgumentError("endpoint base URL must be non-empty")
        if self.timeout_ms <= 0:
            raise InvalidArgumentError(f"timeout_ms must be > 0, got {self.timeout_ms}")
        if self.retries < 0:
            raise InvalidArgumentError(f"retries must be >= 0, got {self.retries}")

    @property
    def timeout_s(self) -> float:
        return self.timeout_ms / 1000.0


def image_png_bytes(img: ImageBuffer) -> bytes:
    """Encode the 8-bit quantized image as PNG; the wire format for images."""
    from PIL import Image

    arr = np.floor(img.values * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class RemoteEmbeddingProvider:
    """HTTP client for the /embed wire protocol; performs no normalization.

    Each call is a fresh blocking request (no shared session), so instances
    are safe to use from concurrent candidate evaluations.
    """

    def __init__(self, endpoint: RemoteEndpoint):
        self.endpoint = endpoint
        health = self._request("GET", "/health")
        try:
            self.name = str(health["name"])
            self.embedding_dim = int(health["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed /health response: {health!r}") from exc

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        last_exc: Exception | None = None
        for _ in range(self.endpoint.retries + 1):
            try:
                resp = requests.request(
                    method, url, json=body, timeout=self.endpoint.timeout_s
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"{method} {path} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except (json.JSONDecodeError, ValueError) as exc:
                raise ProtocolError(f"{method} {path} returned non-JSON body") from exc
        raise TransportError(
            f"{method} {url} failed after {self.endpoint.retries + 1} attempts: {last_exc}"
        )

    def _check_dim(self, payload: dict, vector: np.ndarray) -> None:
        dim = payload.get("dim")
        if dim != self.embedding_dim or vector.shape[-1] != self.embedding_dim:
            raise ProtocolError(
                f"embedding dim mismatch: advertised {self.embedding_dim}, "
                f"response dim {dim}, vector length {vector.shape[-1]}"
            )

    def embed_image(self, img: ImageBuffer) -> np.ndarray:
        payload = self._request(
            "POST",
            "/embed/image",
            {"image_png_b64": base64.b64encode(image_png_bytes(img)).decode("ascii")},
        )
        try:
            vec = np.asarray(payload["embedding"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError("malformed /embed/image response") from exc
        if vec.ndim != 1:
            raise ProtocolError(f"expected a flat embedding, got shape {vec.shape}")
        self._check_dim(payload, vec)
        return vec

    def embed_texts(self, labels: Sequence[str]) -> np.ndarray:
        if len(labels) == 0:
            raise InvalidArgumentError("label list must be non-empty")
        payload = self._request("POST", "/embed/text", {"texts": list(labels)})
        try:
            vecs = np.asarray(payload["embeddings"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError("malformed /embed/text response") from exc
        if vecs.ndim != 2 or vecs.shape[0] != len(labels):
            raise ProtocolError(
                f"expected {len(labels)} embeddings, got array of shape {vecs.shape}"
            )
        self._check_dim(payload, vecs)
        return vecs
