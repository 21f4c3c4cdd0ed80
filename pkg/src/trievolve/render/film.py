"""Linear-radiance films and their 8-bit sRGB export."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

GAMMA = 2.2


@dataclass
class Film:
    """Row-major grid of linear-RGB radiance values, one triple per pixel."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) float64, non-negative

    @classmethod
    def zeros(cls, width: int, height: int) -> "Film":
        return cls(width, height, np.zeros((height, width, 3), dtype=np.float64))


def tonemap(film: Film) -> np.ndarray:
    """Clamp to [0,1], gamma-encode with exponent 1/2.2, quantize to bytes."""
    clamped = np.clip(film.pixels, 0.0, 1.0)
    encoded = clamped ** (1.0 / GAMMA)
    return np.rint(encoded * 255.0).astype(np.uint8)


def png_bytes(image: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as a PNG."""
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(film: Film, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(png_bytes(tonemap(film)))


def load_png(path: str) -> np.ndarray:
    """Read a PNG back as an (H, W, 3) uint8 array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
