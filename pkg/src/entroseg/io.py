"""Image file IO and overlay rendering.

Pillow is confined to this module; everything else works on float arrays.
"""

from __future__ import annotations

import base64
import io as _io
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .detection import DetBox
from .evaluation import GroundTruthBox
from .image import RasterImage

PRED_COLOR = (0, 0, 255)  # predicted boxes: blue
TRUTH_COLOR = (255, 0, 0)  # ground truth: red

# distinct fill colors for label maps, cycled when K exceeds the palette
LABEL_PALETTE = np.array(
    [
        (31, 119, 180),
        (255, 127, 14),
        (44, 160, 44),
        (214, 39, 40),
        (148, 103, 189),
        (140, 86, 75),
        (227, 119, 194),
        (127, 127, 127),
    ],
    dtype=np.uint8,
)


def _to_uint8(data: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_pil(img: Image.Image) -> RasterImage:
    if img.mode in ("1", "L", "I", "I;16", "F"):
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        return RasterImage(arr[:, :, np.newaxis])
    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return RasterImage(arr)


def to_pil(img: RasterImage) -> Image.Image:
    if img.channels == 1:
        return Image.fromarray(_to_uint8(img.data[:, :, 0]), mode="L")
    return Image.fromarray(_to_uint8(img.data), mode="RGB")


def load_image(path: str | Path) -> RasterImage:
    try:
        with Image.open(path) as img:
            return from_pil(img)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc


def save_image(img: RasterImage, path: str | Path) -> None:
    to_pil(img).save(path)


def encode_png_base64(img: RasterImage) -> str:
    buf = _io.BytesIO()
    to_pil(img).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_base64(payload: str) -> RasterImage:
    raw = base64.b64decode(payload, validate=True)
    with Image.open(_io.BytesIO(raw)) as img:
        return from_pil(img)


def render_label_map(labels: np.ndarray, membership: np.ndarray) -> Image.Image:
    """Color every pixel by its cell's class label."""
    pixel_labels = labels[membership]
    colors = LABEL_PALETTE[pixel_labels % len(LABEL_PALETTE)]
    return Image.fromarray(colors, mode="RGB")


def render_overlay(
    img: RasterImage,
    detections: list[DetBox],
    truths: list[GroundTruthBox] | None = None,
    line_width: int = 2,
) -> Image.Image:
    """Draw predicted boxes (blue) and optional truth boxes (red)."""
    canvas = to_pil(img).convert("RGB")
    draw = ImageDraw.Draw(canvas)
    for gt in truths or []:
        draw.rectangle(
            (gt.x1, gt.y1, max(gt.x2 - 1, gt.x1), max(gt.y2 - 1, gt.y1)),
            outline=TRUTH_COLOR,
            width=line_width,
        )
    for det in detections:
        draw.rectangle(
            (det.x1, det.y1, max(det.x2 - 1, det.x1), max(det.y2 - 1, det.y1)),
            outline=PRED_COLOR,
            width=line_width,
        )
    return canvas
