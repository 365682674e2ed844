"""Binary PGM (P5) and PPM (P6) reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["read_pnm", "write_pnm"]


def _tokens(data: bytes, count: int):
    """Return ``count`` header tokens and the offset of the raster."""
    out = []
    i = 0
    n = len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise ValueError("truncated PNM header")
        out.append(data[start:i])
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM as floats in ``[0, 1]``.

    Returns an ``(H, W)`` array for graymaps and ``(H, W, 3)`` for pixmaps.
    """
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    (_, w, h, maxval), off = _tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if not (0 < maxval < 65536):
        raise ValueError(f"{path}: invalid maxval {maxval}")
    chans = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * chans
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=off)
    img = raw.astype(np.float64).reshape((h, w, chans) if chans == 3 else (h, w))
    return img / maxval


def write_pnm(path, image, maxval: int = 255) -> None:
    """Write an ``(H, W)`` or ``(H, W, 3)`` array of values in ``[0, 1]``."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"unsupported image shape {img.shape}")
    h, w = img.shape[:2]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raster = np.rint(img * maxval).astype(dtype)
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    Path(path).write_bytes(header + raster.tobytes())
