"""Deterministic PNG encoding for label maps and previews.

Label maps are written as palette-indexed PNGs: pixel value = image index,
colored by a fixed palette so every tool (CLI, service, browser UI) shows
the same region colors. Encoding carries no timestamps, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

# one RGB color per image index; cycles past 20
PALETTE = (
    (230, 57, 70),
    (69, 123, 157),
    (42, 157, 143),
    (244, 162, 97),
    (131, 56, 236),
    (255, 183, 3),
    (0, 119, 182),
    (214, 40, 40),
    (82, 183, 136),
    (255, 0, 110),
    (58, 12, 163),
    (251, 86, 7),
    (144, 190, 109),
    (106, 76, 147),
    (25, 130, 196),
    (255, 89, 94),
    (138, 201, 38),
    (255, 202, 58),
    (77, 144, 142),
    (140, 81, 10),
)


def label_color(index: int) -> tuple:
    return PALETTE[index % len(PALETTE)]


def save_label_png(path, labels: np.ndarray) -> None:
    """Write an indexed-palette PNG whose pixel values are label indices."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"label map must be 2-d, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise ValueError("label indices must fit in one byte")
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    flat = []
    for i in range(256):
        flat.extend(label_color(i))
    img.putpalette(flat)
    img.save(Path(path), format="PNG")


def load_label_png(path) -> np.ndarray:
    """Read a label map written by :func:`save_label_png`."""
    with Image.open(Path(path)) as img:
        if img.mode != "P":
            raise DataError(f"{path}: expected an indexed-palette label PNG, got mode {img.mode}")
        return np.asarray(img, dtype=np.int32)


def save_rgb_png(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    Image.fromarray(image, mode="RGB").save(Path(path), format="PNG")


def encode_label_png(labels: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    labels = np.asarray(labels)
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    flat = []
    for i in range(256):
        flat.extend(label_color(i))
    img.putpalette(flat)
    img.save(buf, format="PNG")
    return buf.getvalue()


def encode_rgb_png(image: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
