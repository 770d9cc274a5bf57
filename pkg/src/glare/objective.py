"""Loss terms ranked by the optimizer.

The scalar fitness combines an adversarial term (negative log-softmax of the
ground-truth label's image-text similarity), a perceptual drift penalty over
multi-layer image features, and a hinge penalty on pairwise light distances.
The optimizer minimizes fitness = -adv + alpha * pecp + beta * dis, which
maximizes attack strength while penalizing visual drift and light collapse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .lightfield import LightingConfig


@dataclass(frozen=True)
class LabelSet:
    """The candidate labels and which one is the ground truth."""

    labels: tuple[str, ...]
    truth_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise InvalidArgumentError(f"need at least 2 labels, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidArgumentError("labels must be distinct")
        if any(not lab for lab in self.labels):
            raise InvalidArgumentError("labels must be non-empty strings")
        if not (0 <= self.truth_index < len(self.labels)):
            raise InvalidArgumentError(
                f"truth_index {self.truth_index} out of range for {len(self.labels)} labels"
            )

    @property
    def truth_label(self) -> str:
        return self.labels[self.truth_index]


@dataclass(frozen=True)
class LossWeights:
    """Weights for the penalty terms and the light-separation threshold (pixels)."""

    alpha: float = 0.1
    beta: float = 0.01
    dist_threshold: float = 50.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "dist_threshold"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-candidate loss terms plus the scalar the optimizer ranks."""

    adv: float
    pecp: float
    dis: float
    fitness: float


def similarity_vector(
    image_embedding: np.ndarray, text_embeddings: Sequence[np.ndarray] | np.ndarray
) -> np.ndarray:
    """Cosine similarity of the image embedding against each text embedding."""
    img = np.asarray(image_embedding, dtype=np.float64).ravel()
    texts = np.asarray(text_embeddings, dtype=np.float64)
    if texts.ndim == 1:
        texts = texts[np.newaxis, :]
    if texts.ndim != 2 or texts.shape[1] != img.size:
        raise InvalidArgumentError(
            f"text embeddings of shape {texts.shape} do not match image dim {img.size}"
        )
    img_norm = np.linalg.norm(img)
    text_norms = np.linalg.norm(texts, axis=1)
    if img_norm == 0.0 or np.any(text_norms == 0.0):
        raise InvalidArgumentError("zero-norm embedding has no cosine similarity")
    return (texts @ img) / (text_norms * img_norm)


def adversarial_loss(similarities: np.ndarray, truth_index: int) -> float:
    """Negative log-softmax of the ground-truth entry, stabilized by max subtraction.

    Equals ln(n) for a constant vector; finite for entries up to about 1e4
    in magnitude; invariant to adding a constant to every entry.
    """
    v = np.asarray(similarities, dtype=np.float64).ravel()
    if v.size < 1:
        raise InvalidArgumentError("similarity vector is empty")
    if not (0 <= truth_index < v.size):
        raise InvalidArgumentError(f"truth_index {truth_index} out of range for length {v.size}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("similarity vector must be finite")
    shifted = v - v.max()
    log_norm = math.log(np.exp(shifted).sum())
    return float(log_norm - shifted[truth_index])


def _layer_arrays(layer) -> tuple[np.ndarray, ...]:
    if isinstance(layer, np.ndarray):
        return (layer,)
    return tuple(np.asarray(a, dtype=np.float64) for a in layer)


def perceptual_loss(features_x: Sequence, features_y: Sequence) -> float:
    """Sum over layers of the squared Euclidean distance between feature maps.

    A layer may be a single array or a tuple of arrays (for multi-channel
    layers); corresponding shapes must match exactly.
    """
    if len(features_x) != len(features_y):
        raise InvalidArgumentError(
            f"feature lists differ in length: {len(features_x)} vs {len(features_y)}"
        )
    total = 0.0
    for lx, ly in zip(features_x, features_y):
        ax, ay = _layer_arrays(lx), _layer_arrays(ly)
        if len(ax) != len(ay):
            raise InvalidArgumentError("feature layers differ in channel count")
        for a, b in zip(ax, ay):
            if a.shape != b.shape:
                raise InvalidArgumentError(f"feature shape mismatch: {a.shape} vs {b.shape}")
            diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
            total += float(np.sum(diff * diff))
    return total


def distance_loss(cfg: LightingConfig, dist_threshold: float) -> float:
    """Pairwise hinge penalty keeping light positions at least dist_threshold apart.

    Sums max(0, threshold - d_ij) over all source pairs i < j, where d_ij is
    the Euclidean distance between spatial positions only; intensity and
    radius carry different units and stay out of the metric.
    """
    if not np.isfinite(dist_threshold) or dist_threshold < 0:
        raise InvalidArgumentError(f"dist_threshold must be finite and >= 0, got {dist_threshold}")
    srcs = cfg.sources
    total = 0.0
    for i in range(len(srcs)):
        for j in range(i + 1, len(srcs)):
            dx = srcs[i].x - srcs[j].x
            dy = srcs[i].y - srcs[j].y
            total += max(0.0, dist_threshold - math.hypot(dx, dy))
    return total


def fitness(adv: float, pecp: float, dis: float, weights: LossWeights) -> float:
    """Scalar the optimizer minimizes: -adv + alpha * pecp + beta * dis."""
    terms = (adv, pecp, dis)
    if not all(math.isfinite(t) for t in terms):
        raise InvalidArgumentError(f"loss terms must be finite, got {terms}")
    return -adv + weights.alpha * pecp + weights.beta * dis


def breakdown(adv: float, pecp: float, dis: float, weights: LossWeights) -> LossBreakdown:
    """Bundle the three terms with their composed fitness."""
    return LossBreakdown(adv=adv, pecp=pecp, dis=dis, fitness=fitness(adv, pecp, dis, weights))
