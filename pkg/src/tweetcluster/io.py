"""File helpers: atomic writes and the little-endian float block format.

A block file is a 16-byte header ``magic(4) count(u32) rows(u32) dim(u32)``
followed by ``count * rows * dim`` little-endian float32 values, row-major.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Raised when a file does not follow the expected layout."""


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_block(path: str | Path, magic: bytes, values: np.ndarray) -> None:
    """Write a ``count x rows x dim`` array (2-D input means ``rows = 1``)."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, None, :]
    if values.ndim != 3 or len(magic) != 4:
        raise ValueError("expected a 2-D or 3-D array and a 4-byte magic")
    count, rows, dim = values.shape
    body = np.ascontiguousarray(values, dtype="<f4").tobytes()
    atomic_write_bytes(path, _HEADER.pack(magic, count, rows, dim) + body)


def read_block(path: str | Path, magic: bytes) -> np.ndarray:
    """Read a block file as a ``float64`` array of shape ``(count, rows, dim)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    got, count, rows, dim = _HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    expected = _HEADER.size + 4 * count * rows * dim
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return arr.reshape(count, rows, dim).astype(np.float64)
