"""Image file ingestion and export (the only module that touches PIL)."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .core import ImageRef

MAX_SIDE = 4096


def load_image(path: str, image_id: str | None = None) -> ImageRef:
    with Image.open(path) as im:
        return image_from_pil(im, image_id or path)


def image_from_pil(im, image_id: str) -> ImageRef:
    im = im.convert("RGB")
    if im.height > MAX_SIDE or im.width > MAX_SIDE:
        raise ValueError(f"image exceeds {MAX_SIDE}x{MAX_SIDE}")
    arr = np.asarray(im, dtype=np.float64) / 255.0
    return ImageRef(image_id, arr)


def save_image(path: str, rgb: np.ndarray) -> None:
    arr = np.clip(np.asarray(rgb) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def load_rgba(path: str) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
    return arr


def load_mask(path: str) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def load_indexed_mask(path: str) -> np.ndarray:
    """Indexed-color label image -> integer label map."""
    with Image.open(path) as im:
        if im.mode == "P":
            return np.asarray(im, dtype=np.int64)
        return np.asarray(im.convert("L"), dtype=np.int64)
