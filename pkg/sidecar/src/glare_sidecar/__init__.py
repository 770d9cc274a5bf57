"""Scoring sidecar: the embedding wire protocol over a real or stub encoder."""

from .app import SidecarConfig, create_app
from .encoders import DEFAULT_REAL_MODEL, RealEncoder, StubEncoder, build_encoder

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_REAL_MODEL",
    "RealEncoder",
    "SidecarConfig",
    "StubEncoder",
    "build_encoder",
    "create_app",
]
