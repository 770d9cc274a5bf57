"""Parametric point-light illumination model and the analytic relighting backend.

A scene is lit by N point lights, each with a position, an intensity gain and
a Gaussian falloff radius. The per-point illuminance of a configuration is the
sum of the per-source Gaussian contributions; relighting applies that field to
an image as a multiplicative gain on top of an ambient term, saturating at 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError

# Pixel values saturate here; overlapping lights clamp rather than renormalize,
# mimicking sensor saturation and keeping the light field's additivity visible.
HIGHLIGHT_CLAMP = 1.0

DEFAULT_AMBIENT_GAIN = 0.6

PARAMS_PER_LIGHT = 4


@dataclass(frozen=True)
class LightSource:
    """One point light: position in pixels, intensity gain, falloff radius.

    Coordinates use the image convention: origin at the top-left corner,
    x rightward, y downward. Positions may lie anywhere in the real plane;
    search bounds, not this type, confine them to the image.
    """

    x: float
    y: float
    intensity: float
    radius: float

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.intensity, self.radius)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidArgumentError(f"light parameters must be finite, got {vals}")
        if self.intensity < 0:
            raise InvalidArgumentError(f"intensity must be >= 0, got {self.intensity}")
        if self.radius <= 0:
            raise InvalidArgumentError(f"radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class LightingConfig:
    """An ordered collection of point lights, the variable the attack searches.

    Round-trips losslessly through a flat vector of length 4N laid out as
    (x1, y1, intensity1, radius1, x2, y2, ...).
    """

    sources: tuple[LightSource, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(self.sources))

    @property
    def n_lights(self) -> int:
        return len(self.sources)

    def as_vector(self) -> np.ndarray:
        out = np.empty(PARAMS_PER_LIGHT * len(self.sources), dtype=np.float64)
        for i, s in enumerate(self.sources):
            out[4 * i : 4 * i + 4] = (s.x, s.y, s.intensity, s.radius)
        return out

    @classmethod
    def from_vector(cls, vec: Sequence[float] | np.ndarray) -> "LightingConfig":
        flat = np.asarray(vec, dtype=np.float64).ravel()
        if flat.size % PARAMS_PER_LIGHT != 0:
            raise InvalidArgumentError(
                f"light vector length must be a multiple of {PARAMS_PER_LIGHT}, got {flat.size}"
            )
        sources = tuple(
            LightSource(float(flat[i]), float(flat[i + 1]), float(flat[i + 2]), float(flat[i + 3]))
            for i in range(0, flat.size, PARAMS_PER_LIGHT)
        )
        return cls(sources)


@dataclass(frozen=True)
class LightMap:
    """Per-pixel illuminance F sampled at pixel centers; nonnegative, unclamped."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.size == 0:
            raise InvalidArgumentError(f"light map must be a nonempty 2-D array, got shape {vals.shape}")
        if not np.all(vals >= 0):
            raise InvalidArgumentError("light map values must be nonnegative")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ImageBuffer:
    """H x W x 3 image with every channel value in [0, 1].

    Values are stored as read-only float64 so buffers are safe to share
    across concurrent candidate evaluations.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3 or vals.shape[2] != 3 or vals.shape[0] * vals.shape[1] == 0:
            raise InvalidArgumentError(f"image must be H x W x 3 with H*W > 0, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("image values must be finite")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise InvalidArgumentError(
                f"image values must lie in [0, 1], got range [{vals.min()}, {vals.max()}]"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class RenderParams:
    """Analytic renderer knobs; the highlight clamp itself is fixed at 1.0."""

    ambient_gain: float = DEFAULT_AMBIENT_GAIN

    def __post_init__(self) -> None:
        if not np.isfinite(self.ambient_gain) or not (0.0 <= self.ambient_gain <= 2.0):
            raise InvalidArgumentError(f"ambient_gain must be in [0, 2], got {self.ambient_gain}")


def illuminance_at(cfg: LightingConfig, z: Sequence[float] | np.ndarray) -> float | np.ndarray:
    """Total illuminance at point(s) z, summed over all sources.

    Each source contributes intensity * exp(-|z - center|^2 / (2 radius^2)).
    Accepts a single (x, y) point or an array of shape (..., 2); returns a
    scalar or an array of shape (...). An empty configuration yields 0.
    """
    pts = np.asarray(z, dtype=np.float64)
    if pts.shape == () or pts.shape[-1] != 2:
        raise InvalidArgumentError(f"points must have trailing dimension 2, got shape {pts.shape}")
    px = pts[..., 0]
    py = pts[..., 1]
    total = np.zeros(px.shape, dtype=np.float64)
    for s in cfg.sources:
        dx = px - s.x
        dy = py - s.y
        sq = dx * dx + dy * dy
        total += s.intensity * np.exp(-sq / (2.0 * s.radius * s.radius))
    if pts.ndim == 1:
        return float(total)
    return total


def pixel_centers(width: int, height: int) -> np.ndarray:
    """Grid of pixel-center coordinates, shape (height, width, 2)."""
    if width <= 0 or height <= 0:
        raise InvalidArgumentError(f"dimensions must be positive, got {width}x{height}")
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    grid = np.empty((height, width, 2), dtype=np.float64)
    grid[..., 0] = xs[np.newaxis, :]
    grid[..., 1] = ys[:, np.newaxis]
    return grid


def render_light_map(cfg: LightingConfig, width: int, height: int) -> LightMap:
    """Sample the illuminance field at every pixel center of a width x height grid."""
    grid = pixel_centers(width, height)
    return LightMap(illuminance_at(cfg, grid))


def relight(img: ImageBuffer, cfg: LightingConfig, params: RenderParams | None = None) -> ImageBuffer:
    """Apply a lighting configuration to an image.

    Every channel is scaled by (ambient_gain + F) at its pixel center and
    clamped at 1.0, so lights brighten, the ambient term alone dims (or, at
    ambient_gain=1 with no lights, leaves the image untouched).
    """
    if params is None:
        params = RenderParams()
    fmap = render_light_map(cfg, img.width, img.height).values
    gain = params.ambient_gain + fmap
    out = np.minimum(HIGHLIGHT_CLAMP, img.values * gain[:, :, np.newaxis])
    return ImageBuffer(out)


def translated(cfg: LightingConfig, dx: float, dy: float) -> LightingConfig:
    """The same configuration with every source shifted by (dx, dy)."""
    return LightingConfig(
        tuple(LightSource(s.x + dx, s.y + dy, s.intensity, s.radius) for s in cfg.sources)
    )


def merge(configs: Iterable[LightingConfig]) -> LightingConfig:
    """Union of several configurations; illuminance adds source by source."""
    sources: list[LightSource] = []
    for cfg in configs:
        sources.extend(cfg.sources)
    return LightingConfig(tuple(sources))
