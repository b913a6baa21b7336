"""PNG output for generated tensors (8-bit grayscale, [-1,1] mapped linearly)."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeMismatch


def tensor_to_png_bytes(x: np.ndarray) -> bytes:
    if x.ndim == 3:
        if x.shape[0] != 1:
            raise ShapeMismatch(f"PNG export expects one channel, got {x.shape}")
        x = x[0]
    if x.ndim != 2:
        raise ShapeMismatch(f"PNG export expects [H,W] or [1,H,W], got {x.shape}")
    u8 = np.clip(np.round((np.clip(x, -1.0, 1.0) + 1.0) * 127.5), 0, 255)
    img = Image.fromarray(u8.astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def save_png(path: str | Path, x: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_png_bytes(x))


def load_png(path: str | Path) -> np.ndarray:
    img = Image.open(path).convert("L")
    u8 = np.asarray(img, dtype=np.float64)
    return (u8 / 127.5 - 1.0)[None]
