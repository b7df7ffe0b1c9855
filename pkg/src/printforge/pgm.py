"""Binary PGM (P5) image I/O for signed unit-range grayscale.

Pixel mapping: a value v in [-1, 1] is stored as round((v + 1) * 127.5)
with maxval 255, and read back as byte / 127.5 - 1.
"""

from __future__ import annotations

import re

import numpy as np


class PgmError(Exception):
    pass


def save_pgm(path, image):
    """Write a 2-D array with values in [-1, 1] as binary PGM."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise PgmError(f"expected a 2-D image, got shape {img.shape}")
    data = np.round((np.clip(img, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        handle.write(data.tobytes())


def load_pgm(path):
    """Read a binary PGM written by save_pgm back into [-1, 1] floats."""
    with open(path, "rb") as handle:
        raw = handle.read()
    match = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not match:
        raise PgmError(f"not a binary PGM: {path}")
    w, h, maxval = (int(match.group(i)) for i in (1, 2, 3))
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval} in {path}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=match.end())
    if pixels.size != w * h:
        raise PgmError(f"truncated PGM: {path}")
    return pixels.reshape(h, w).astype(np.float64) / 127.5 - 1.0
