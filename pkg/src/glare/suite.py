"""Bundled synthetic image suite for offline attack evaluation.

Fifty deterministic two-tone images (one figure tone over a background tone)
sized so a full attack run stays desk-scale. Candidates are screened with a
coarse probe set of lighting configurations and kept only when some probe
already moves the toy encoder's argmax; that guarantees the optimizer a
nondegenerate search problem without handing it the answer. The truth label
of each image is its clean argmax, so "success" means the attack actually
moved the prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .lightfield import ImageBuffer, LightSource, LightingConfig, RenderParams, relight
from .objective import similarity_vector
from .providers import EmbeddingProvider, LocalEmbeddingProvider, local_embed_texts

SUITE_SEED = 20240917
SUITE_SIZE = 50
SUITE_IMAGE_SIDE = 64


@dataclass(frozen=True)
class SuiteCase:
    name: str
    image: ImageBuffer


def _draw_disk(canvas: np.ndarray, cx: float, cy: float, radius: float, color: np.ndarray) -> None:
    h, w = canvas.shape[:2]
    ys, xs = np.ogrid[:h, :w]
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    canvas[mask] = color


def _two_tones(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # Tones span the full range and either one may be the brighter, so the
    # suite spreads across the encoder's histogram bins instead of clustering.
    while True:
        a = rng.uniform(0.05, 0.95, size=3)
        b = rng.uniform(0.05, 0.95, size=3)
        if abs(a.mean() - b.mean()) >= 0.25:
            return a, b


def _propose(rng: np.random.Generator, side: int, kind: int) -> np.ndarray:
    bg, fg = _two_tones(rng)
    canvas = np.empty((side, side, 3), dtype=np.float64)
    canvas[:] = bg
    if kind == 0:
        cx, cy = rng.uniform(0.2 * side, 0.8 * side, size=2)
        radius = rng.uniform(0.12 * side, 0.35 * side)
        _draw_disk(canvas, cx, cy, radius, fg)
    elif kind == 1:
        x0, y0 = rng.integers(0, side // 2, size=2)
        ww, hh = rng.integers(side // 5, (2 * side) // 3, size=2)
        canvas[int(y0) : int(y0 + hh), int(x0) : int(x0 + ww)] = fg
    elif kind == 2:
        # Two parallel bars, horizontal or vertical.
        thickness = int(rng.integers(side // 10, side // 5))
        first = int(rng.integers(0, side // 2 - thickness))
        second = int(rng.integers(side // 2, side - thickness))
        if rng.random() < 0.5:
            canvas[first : first + thickness, :] = fg
            canvas[second : second + thickness, :] = fg
        else:
            canvas[:, first : first + thickness] = fg
            canvas[:, second : second + thickness] = fg
    else:
        # One figure quadrant plus a disk in the opposite corner.
        half = side // 2
        qx, qy = int(rng.integers(0, 2)), int(rng.integers(0, 2))
        canvas[qy * half : (qy + 1) * half, qx * half : (qx + 1) * half] = fg
        ox = (1 - qx) * half + half / 2
        oy = (1 - qy) * half + half / 2
        _draw_disk(canvas, ox, oy, rng.uniform(0.1 * side, 0.2 * side), fg)
    return canvas


def probe_configs(side: int) -> list[LightingConfig]:
    """Coarse, fixed lighting probes used to screen suite candidates."""
    s = float(side)
    margin = 0.125 * s
    corners = [
        (margin, margin),
        (s - margin, margin),
        (margin, s - margin),
        (s - margin, s - margin),
    ]
    probes = [LightingConfig()]  # ambient-only dimming
    for trio in combinations(corners, 3):
        probes.append(
            LightingConfig(tuple(LightSource(x, y, 1.0, 0.6 * s) for x, y in trio))
        )
    probes.append(LightingConfig((LightSource(s / 2, s / 2, 1.0, 0.4 * s),)))
    probes.append(
        LightingConfig(
            (
                LightSource(s / 2, margin, 1.0, 0.3 * s),
                LightSource(margin, s - margin, 1.0, 0.3 * s),
                LightSource(s - margin, s - margin, 1.0, 0.3 * s),
            )
        )
    )
    return probes


def _probe_can_flip(
    image: ImageBuffer,
    probes: Sequence[LightingConfig],
    text_embeddings: np.ndarray,
    provider: EmbeddingProvider,
    render_params: RenderParams,
) -> bool:
    clean = int(np.argmax(similarity_vector(provider.embed_image(image), text_embeddings)))
    for cfg in probes:
        sims = similarity_vector(provider.embed_image(relight(image, cfg, render_params)), text_embeddings)
        if int(np.argmax(sims)) != clean:
            return True
    return False


def synthetic_suite(
    count: int = SUITE_SIZE, side: int = SUITE_IMAGE_SIDE, seed: int = SUITE_SEED
) -> list[SuiteCase]:
    """Deterministic two-tone images whose predictions illumination can move."""
    from .persistence import COCO30_LABELS

    rng = np.random.default_rng(seed)
    provider = LocalEmbeddingProvider()
    text_embeddings = local_embed_texts(COCO30_LABELS)
    probes = probe_configs(side)
    render_params = RenderParams()
    cases = []
    kind = 0
    while len(cases) < count:
        canvas = _propose(rng, side, kind % 4)
        kind += 1
        image = ImageBuffer(canvas)
        if _probe_can_flip(image, probes, text_embeddings, provider, render_params):
            cases.append(SuiteCase(name=f"suite-{len(cases):03d}", image=image))
    return cases


def clean_truths(
    cases: Sequence[SuiteCase], provider: EmbeddingProvider, labels: Sequence[str]
) -> list[int]:
    """Truth index per case: the clean argmax under the given provider."""
    text_embeddings = provider.embed_texts(list(labels))
    truths = []
    for case in cases:
        sims = similarity_vector(provider.embed_image(case.image), text_embeddings)
        truths.append(int(np.argmax(sims)))
    return truths
