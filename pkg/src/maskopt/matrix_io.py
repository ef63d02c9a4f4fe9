"""Reading and writing the MXF1 binary matrix format.

Layout (all little-endian)::

    b"MXF1" | rows: uint64 | cols: uint64 | rows*cols float64, row-major
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .core import FormatError

MAGIC = b"MXF1"
_HEADER = struct.Struct("<4sQQ")


def encode_matrix(m) -> bytes:
    a = np.asarray(m, dtype="<f8")
    if a.ndim != 2:
        raise FormatError(f"only 2-D matrices can be stored, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise FormatError("matrix contains non-finite values")
    return _HEADER.pack(MAGIC, a.shape[0], a.shape[1]) + np.ascontiguousarray(a).tobytes()


def decode_matrix(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for MXF1 header")
    magic, rows, cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = rows * cols * 8
    payload = buf[_HEADER.size:]
    if len(payload) < expected:
        raise FormatError(f"truncated payload: header says {rows}x{cols}, "
                          f"found {len(payload) // 8} values")
    if len(payload) > expected:
        raise FormatError(f"trailing bytes after {rows}x{cols} payload")
    a = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(a)):
        raise FormatError("payload contains non-finite values")
    return a


def save_matrix(path: str | os.PathLike, m) -> None:
    data = encode_matrix(m)
    with open(path, "wb") as fh:
        fh.write(data)


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_matrix(fh.read())
