"""Binary portable-anymap readers and writers for the dataset image files.

Color frames are P6 portable pixmaps with maxval 255 (8 bits per channel).
Depth frames are P5 portable graymaps with maxval 65535; samples are two
bytes each, most significant byte first, per the netpbm convention. Headers
may contain ``#`` comments between tokens. Writers emit the canonical
``magic\\nwidth height\\nmaxval\\n`` header so output files are byte-stable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .errors import DatasetError

PathLike = Union[str, Path]


def _read_header(data: bytes, magic: bytes, context: str) -> Tuple[int, int, int, int]:
    """Parse the header; returns (width, height, maxval, raster offset)."""
    if not data.startswith(magic):
        raise DatasetError(f"{context}: expected {magic.decode()} file")
    pos = len(magic)
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise DatasetError(f"{context}: truncated header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            if end == -1:
                raise DatasetError(f"{context}: unterminated comment")
            pos = end + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            token = data[pos:end]
            if not token.isdigit():
                raise DatasetError(f"{context}: bad header token {token!r}")
            tokens.append(int(token))
            pos = end
    # Exactly one whitespace byte separates the maxval from the raster.
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise DatasetError(f"{context}: missing raster separator")
    width, height, maxval = tokens
    if width <= 0 or height <= 0:
        raise DatasetError(f"{context}: bad dimensions {width}x{height}")
    return width, height, maxval, pos + 1


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"{path}: unreadable image: {exc}") from exc


def read_ppm(path: PathLike) -> np.ndarray:
    """Read a P6 pixmap; returns an (H, W, 3) uint8 array."""
    data = _read_bytes(path)
    width, height, maxval, offset = _read_header(data, b"P6", str(path))
    if maxval != 255:
        raise DatasetError(f"{path}: expected maxval 255, got {maxval}")
    need = width * height * 3
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise DatasetError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path: PathLike, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DatasetError("write_ppm expects an (H, W, 3) uint8 array")
    height, width = img.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(img).tobytes())


def read_pgm16(path: PathLike) -> np.ndarray:
    """Read a 16-bit P5 graymap; returns an (H, W) uint16 array."""
    data = _read_bytes(path)
    width, height, maxval, offset = _read_header(data, b"P5", str(path))
    if maxval != 65535:
        raise DatasetError(f"{path}: expected maxval 65535, got {maxval}")
    need = width * height * 2
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise DatasetError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    # Samples are big-endian on disk.
    return np.frombuffer(raster, dtype=">u2").reshape(height, width).astype(np.uint16)


def write_pgm16(path: PathLike, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint16:
        raise DatasetError("write_pgm16 expects an (H, W) uint16 array")
    height, width = img.shape
    header = f"P5\n{width} {height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + img.astype(">u2").tobytes())
