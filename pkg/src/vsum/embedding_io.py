"""Binary container for per-frame embedding matrices.

Layout (little-endian): magic ``VSEM1`` (5 bytes), version u16, n_frames u32,
dim u32, then n_frames * dim float32 values row-major. File size must equal
15 + 4 * n * d bytes exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .scene_division import FrameEmbeddings

MAGIC = b"VSEM1"
VERSION = 1
_HEADER = struct.Struct("<5sHII")


def write_embeddings(path: str | Path, matrix: np.ndarray) -> Path:
    """Write an (n, d) matrix; values are stored as float32."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise FormatError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
    n, d = matrix.shape
    path = Path(path)
    payload = _HEADER.pack(MAGIC, VERSION, n, d) + np.ascontiguousarray(
        matrix, dtype="<f4"
    ).tobytes()
    path.write_bytes(payload)
    return path


def load_embeddings(path: str | Path) -> FrameEmbeddings:
    """Bit-exact parse; write -> read -> write round-trips identically."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read embeddings '{path}': {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"'{path}': truncated header ({len(raw)} bytes)")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"'{path}': bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"'{path}': unsupported version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "trailing bytes in"
        raise FormatError(
            f"'{path}': {kind} payload ({len(raw)} bytes, expected {expected} "
            f"for {n}x{d})"
        )
    matrix = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d)
    return FrameEmbeddings(matrix)
