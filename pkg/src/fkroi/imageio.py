"""8-bit RGB PNG read/write with fixed encoder settings."""
from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

# fixed so re-encoding identical pixels gives identical bytes
PNG_COMPRESS_LEVEL = 6


def write_png(path, pixels: np.ndarray) -> None:
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    Image.fromarray(arr).save(path, format="PNG", optimize=False, compress_level=PNG_COMPRESS_LEVEL)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
