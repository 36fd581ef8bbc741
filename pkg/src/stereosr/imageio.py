"""8-bit PNG and JPEG conversion at the [0, 1] float boundary."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .tensor import ShapeError, as_tensor3


def to_uint8(img) -> np.ndarray:
    """(C, H, W) floats -> (H, W, C) bytes, rounding half up."""
    img = as_tensor3(img)
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5)
    return q.astype(np.uint8).transpose(1, 2, 0)


def from_uint8(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def write_png(path, img) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG", optimize=False)


def jpeg_roundtrip(img, quality: int) -> np.ndarray:
    """Baseline JPEG (4:2:0) encode/decode through libjpeg."""
    img = as_tensor3(img)
    if img.shape[0] != 3:
        raise ShapeError(f"JPEG needs a 3-channel image, got {img.shape[0]}")
    quality = int(quality)
    if not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be in [1, 100], got {quality}")
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="RGB").save(
        buf, format="JPEG", quality=quality, subsampling=2, optimize=False, progressive=False
    )
    buf.seek(0)
    with Image.open(buf) as im:
        return from_uint8(np.asarray(im.convert("RGB")))
