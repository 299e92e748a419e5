"""Caption generation: batched per-scene descriptions in the consuming
pipeline's caption JSON schema, with the cross-batch normalization rules
(interior batches continue the narrative instead of beginning/ending it).

The default ``template`` model describes frame statistics deterministically
so the extractor works offline; real video-language models plug in through
the same registry.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ExtractionError
from .sampling import middle_frame_indices

CAPTION_PROMPT = "Describe this video in detail"
DEFAULT_BATCH_SIZE = 60

_BEGIN_RE = re.compile(r"^\s*the video (?:begins|starts)\b", re.IGNORECASE)
_CONTINUE_RE = re.compile(r"^\s*the video continues\b", re.IGNORECASE)
_END_RE = re.compile(r"\bthe video (?:ends|concludes)\b(?=[^.!?]*[.!?]?\s*$)", re.IGNORECASE)


def normalize_batch_text(text: str, is_first: bool, is_last: bool) -> str:
    out = text
    if not is_first:
        if _BEGIN_RE.search(out):
            out = _BEGIN_RE.sub("The video continues", out, count=1)
        elif not _CONTINUE_RE.search(out):
            out = f"The video continues. {out}"
    if not is_last and _END_RE.search(out):
        out = _END_RE.sub("The scene concludes", out, count=1)
    return out


def caption_template(frames: np.ndarray, frame_indices: Sequence[int], prompt: str) -> str:
    """Deterministic description of a frame batch from simple statistics."""
    batch = frames[list(frame_indices)].astype(np.float64)
    luma = batch @ np.array([0.299, 0.587, 0.114]) if batch.ndim == 4 else batch
    brightness = float(luma.mean())
    spread = float(luma.std())
    trend = float(luma.reshape(len(batch), -1).mean(axis=1)[-1] - luma.reshape(len(batch), -1).mean(axis=1)[0])
    tone = "bright" if brightness > 128 else "dim"
    motion = "shifting" if abs(trend) > 2.0 else "steady"
    return (
        f"The video begins with a {tone} {motion} sequence of "
        f"{len(frame_indices)} sampled moments (mean level {brightness:.0f}, "
        f"texture spread {spread:.0f}). The video ends at level "
        f"{brightness + trend:.0f}."
    )


CAPTION_MODELS: dict[str, Callable[..., str]] = {
    "template": caption_template,
}


def resolve_caption_model(model_id: str) -> Callable[..., str]:
    if model_id not in CAPTION_MODELS:
        raise ExtractionError(
            f"unknown caption model '{model_id}' (known: {sorted(CAPTION_MODELS)})"
        )
    return CAPTION_MODELS[model_id]


def describe_interval(
    frames: np.ndarray,
    interval: tuple[int, int],
    fps: float,
    model: Callable[..., str],
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> str:
    start, end = interval
    if end <= start:
        raise ExtractionError(f"empty interval ({start}, {end})")
    indices = [start + i for i in middle_frame_indices(fps, end - start)]
    chunks = [indices[i:i + batch_size] for i in range(0, len(indices), batch_size)]
    pieces = []
    for i, chunk in enumerate(chunks):
        text = model(frames, chunk, CAPTION_PROMPT)
        if not text:
            raise ExtractionError(f"caption model returned empty text for batch {i}")
        pieces.append(
            normalize_batch_text(text, is_first=i == 0, is_last=i == len(chunks) - 1)
        )
    return " ".join(pieces)


def caption_scenes(
    frames: np.ndarray,
    fps: float,
    segmentation: Sequence[tuple[int, int]],
    model_id: str,
    video_id: str,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> dict:
    """Per-scene and global captions in the pipeline's caption schema."""
    model = resolve_caption_model(model_id)
    scenes = []
    for i, (start, end) in enumerate(segmentation):
        scenes.append(
            {
                "scene_index": i,
                "start": int(start),
                "end": int(end),
                "text": describe_interval(frames, (start, end), fps, model, batch_size),
            }
        )
    return {
        "video_id": video_id,
        "global": describe_interval(frames, (0, len(frames)), fps, model, batch_size),
        "scenes": scenes,
    }


def write_captions(path: str | Path, doc: dict) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path
