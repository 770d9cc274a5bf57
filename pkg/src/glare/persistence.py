"""Image and label I/O plus the run-report document.

Images load from 8-bit PNG or binary PPM (P6) into [0,1] float buffers and
save with round-half-up quantization. Reports are a single JSON document that
round-trips byte-for-byte. File writes go through a temp file and rename so
readers never observe partial output.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError, LabelFileError, ReportSchemaError
from .lightfield import ImageBuffer, LightMap

REPORT_SCHEMA_VERSION = 1

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# The 30 object categories bundled as the default label set.
COCO30_LABELS = (
    "airplane", "banana", "bear", "bed", "bird", "boat",
    "broccoli", "bus", "cake", "cell phone", "clock", "cow",
    "dog", "donut", "elephant", "fire hydrant", "horse", "kite",
    "motorcycle", "pizza", "sandwich", "teddy bear", "traffic light", "stop sign",
    "toilet", "train", "umbrella", "vase", "zebra", "sheep",
)

BUILTIN_PREFIX = "builtin:"
_BUILTINS = {"coco30": COCO30_LABELS}


@dataclass(frozen=True)
class LabelList:
    """Ordered distinct labels, optionally annotated with per-file truths."""

    labels: tuple[str, ...]
    truths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise LabelFileError("label list is empty")
        if len(set(self.labels)) != len(self.labels):
            dupes = sorted({lab for lab in self.labels if self.labels.count(lab) > 1})
            raise LabelFileError(f"duplicate labels: {dupes}")

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelFileError(f"label {label!r} not in the label list") from None


def quantize_to_u8(values: np.ndarray) -> np.ndarray:
    """Round half up to 8-bit levels."""
    return np.clip(np.floor(values * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_ppm(data: bytes, path: str) -> ImageBuffer:
    # Header: "P6" <ws> width <ws> height <ws> maxval <single ws> raster.
    # '#' starts a comment running to end of line.
    pos = 2  # past the magic
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise ImageFormatError(f"{path}: bad PPM header token at byte {start}")
        fields.append(int(token))
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"{path}: non-positive PPM dimensions at byte {pos}")
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported PPM maxval {maxval} at byte {pos}")
    pos += 1  # single whitespace after maxval
    expected = width * height * 3
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise ImageFormatError(
            f"{path}: truncated PPM raster at byte {pos + len(raster)} "
            f"(expected {expected} bytes)"
        )
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(arr.astype(np.float64) / 255.0)


def _decode_png(data: bytes, path: str) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode == "RGBA":
                im = im.convert("RGB")
            if im.mode != "RGB":
                raise ImageFormatError(
                    f"{path}: unsupported PNG mode {im.mode!r} (need 8-bit RGB/RGBA)"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"{path}: undecodable PNG after byte {len(data)}: {exc}") from exc
    return ImageBuffer(arr.astype(np.float64) / 255.0)


def load_image(path: str) -> ImageBuffer:
    """Decode a PNG (8-bit RGB/RGBA, alpha dropped) or binary PPM into [0,1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.startswith(PNG_MAGIC):
        return _decode_png(data, path)
    if data.startswith(b"P6"):
        return _parse_ppm(data, path)
    raise ImageFormatError(f"{path}: unsupported image format at byte 0")


def save_image(img: ImageBuffer, path: str, fmt: str | None = None) -> None:
    """Write an image as PNG or PPM; the format defaults to the extension."""
    fmt = (fmt or os.path.splitext(path)[1].lstrip(".")).lower()
    arr = quantize_to_u8(img.values)
    if fmt == "png":
        buf = io.BytesIO()
        Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
        _atomic_write(path, buf.getvalue())
    elif fmt in ("ppm", "p6"):
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        _atomic_write(path, header + arr.tobytes())
    else:
        raise ImageFormatError(f"{path}: unsupported output format {fmt!r}")


def save_light_map(light_map: LightMap, path: str) -> None:
    """Export the illuminance field as an 8-bit grayscale PNG, clamped at 1."""
    clamped = np.minimum(1.0, light_map.values)
    arr = quantize_to_u8(clamped)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    _atomic_write(path, buf.getvalue())


def load_labels(source: str) -> LabelList:
    """Load labels from a file (one per line, '#' comments) or a builtin set."""
    if source.startswith(BUILTIN_PREFIX):
        key = source[len(BUILTIN_PREFIX):]
        if key not in _BUILTINS:
            raise LabelFileError(f"unknown builtin label set {key!r}")
        return LabelList(labels=_BUILTINS[key])
    labels = []
    with open(source, "r", encoding="utf-8") as fh:
        for line in fh:
            text = line.split("#", 1)[0].strip()
            if text:
                labels.append(text)
    return LabelList(labels=tuple(labels))


def report_to_bytes(report: dict) -> bytes:
    """Canonical serialization; serializing a parsed report is byte-identical."""
    return (json.dumps(report, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def save_report(report: dict, path: str) -> None:
    if report.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ReportSchemaError(
            f"refusing to write schema_version {report.get('schema_version')!r}; "
            f"expected {REPORT_SCHEMA_VERSION}"
        )
    _atomic_write(path, report_to_bytes(report))


def load_report(path: str) -> dict:
    with open(path, "rb") as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReportSchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(report, dict):
        raise ReportSchemaError(f"{path}: report must be a JSON object")
    version = report.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise ReportSchemaError(
            f"{path}: unknown schema_version {version!r} (this reader handles {REPORT_SCHEMA_VERSION})"
        )
    return report
