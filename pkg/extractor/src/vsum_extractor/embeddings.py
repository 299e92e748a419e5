"""Frame embeddings: backbone registry plus the VSEM1 container writer.

The default ``pixel64`` backbone is a dependency-free pooled-luma embedding
(8x8 block means, L2-normalized) that runs offline and deterministically.
Contrastive/self-distilled encoders plug in through the same registry; the
``clip-vit-b32`` entry resolves only when sentence-transformers and its
weights are available locally, otherwise it raises at load time.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ExtractionError

VSEM_MAGIC = b"VSEM1"
VSEM_VERSION = 1
_HEADER = struct.Struct("<5sHII")

_LUMA = np.array([0.299, 0.587, 0.114])


def _to_gray(frames: np.ndarray) -> np.ndarray:
    if frames.ndim == 4:
        return frames.astype(np.float64) @ _LUMA
    return frames.astype(np.float64)


def _pool(gray: np.ndarray, blocks: int) -> np.ndarray:
    n, h, w = gray.shape
    hc, wc = h - h % blocks, w - w % blocks
    cropped = gray[:, :hc, :wc]
    pooled = cropped.reshape(n, blocks, hc // blocks, blocks, wc // blocks)
    return pooled.mean(axis=(2, 4)).reshape(n, blocks * blocks)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def embed_pixel64(frames: np.ndarray) -> np.ndarray:
    """64-dim pooled-luma embedding."""
    return _normalize_rows(_pool(_to_gray(frames), 8))


def embed_pixel256(frames: np.ndarray) -> np.ndarray:
    """256-dim pooled-luma embedding (finer spatial grid)."""
    return _normalize_rows(_pool(_to_gray(frames), 16))


def _load_clip_backbone() -> Callable[[np.ndarray], np.ndarray]:
    try:
        from sentence_transformers import SentenceTransformer
        from PIL import Image

        model = SentenceTransformer("clip-ViT-B-32")
    except Exception as exc:  # import failure or missing weights
        raise ExtractionError(f"cannot load clip-vit-b32 backbone: {exc}") from exc

    def run(frames: np.ndarray) -> np.ndarray:
        images = [Image.fromarray(f) for f in frames]
        return np.asarray(model.encode(images, convert_to_numpy=True))

    return run


BACKBONES: dict[str, Callable[[], Callable[[np.ndarray], np.ndarray]]] = {
    "pixel64": lambda: embed_pixel64,
    "pixel256": lambda: embed_pixel256,
    "clip-vit-b32": _load_clip_backbone,
}


def resolve_backbone(backbone_id: str) -> Callable[[np.ndarray], np.ndarray]:
    if backbone_id not in BACKBONES:
        raise ExtractionError(
            f"unknown backbone '{backbone_id}' (known: {sorted(BACKBONES)})"
        )
    return BACKBONES[backbone_id]()


def compute_embeddings(frames: np.ndarray, backbone_id: str, stride: int = 1) -> np.ndarray:
    """Per-frame embedding matrix.

    With ``stride > 1`` only every stride-th frame runs through the backbone
    and its row is repeated for the frames in between, so the output still
    has one row per frame (the consuming pipeline's refinement needs full
    coverage).
    """
    if stride < 1:
        raise ExtractionError("stride must be >= 1")
    backbone = resolve_backbone(backbone_id)
    if stride == 1:
        return backbone(frames)
    sampled = backbone(frames[::stride])
    return np.repeat(sampled, stride, axis=0)[: len(frames)]


def write_vsem(path: str | Path, matrix: np.ndarray) -> Path:
    """Write the embedding container: magic VSEM1, version u16, n u32, d u32
    (little-endian), then n*d float32 row-major."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ExtractionError(f"embedding matrix must be 2-D, got {matrix.shape}")
    n, d = matrix.shape
    path = Path(path)
    path.write_bytes(
        _HEADER.pack(VSEM_MAGIC, VSEM_VERSION, n, d)
        + np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    )
    return path
