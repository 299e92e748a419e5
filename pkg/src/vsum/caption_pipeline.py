"""Scene and video description via a pluggable caption client.

Frames are sampled one per second (the middle frame of each second), split
into batches, captioned batch by batch, and the batch texts are stitched into
one narrative. Batch texts are normalized so that only the true first batch
may open with "The video begins ..." and only the true last batch may close
with "The video ends ..."; interior batches are rewritten to continue and
conclude the scene instead.
"""

from __future__ import annotations

import logging
import math
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import BackendError, CaptionError, InvalidInput

logger = logging.getLogger(__name__)

CAPTION_PROMPT = "Describe this video in detail"
DEFAULT_BATCH_SIZE = 60
DEFAULT_RETRIES = 3
CONTINUE_PREFIX = "The video continues"
SCENE_CONCLUDES = "The scene concludes"

_BEGIN_RE = re.compile(r"^\s*the video (?:begins|starts)\b", re.IGNORECASE)
_CONTINUE_RE = re.compile(r"^\s*the video continues\b", re.IGNORECASE)
# an ending assertion counts only when it sits in the final sentence
_END_RE = re.compile(r"\bthe video (?:ends|concludes)\b(?=[^.!?]*[.!?]?\s*$)", re.IGNORECASE)


@dataclass
class FrameSamplingPlan:
    """One representative frame index per whole second of footage."""

    fps: float
    indices: list[int]


@dataclass
class CaptionBatch:
    batch_index: int
    frame_indices: list[int]
    text: str = ""
    is_first: bool = False
    is_last: bool = False


@dataclass
class SceneCaption:
    scene_index: int
    text: str


class CaptionClient(Protocol):
    """Caption backend contract.

    ``caption`` receives the ordered frame indices of one batch, the fixed
    prompt, and (when the caller can supply them) the decoded frame images.
    Implementations may raise :class:`BackendError` on transient failure;
    the orchestration layer retries.
    """

    backend_id: str

    def caption(
        self,
        frame_indices: Sequence[int],
        prompt: str,
        images: Sequence[np.ndarray] | None = None,
    ) -> str:
        ...


def sample_middle_frames(fps: float, n_frames: int) -> FrameSamplingPlan:
    """Pick floor(k*fps + fps/2) for each whole second k, clamped to the last
    frame; duplicates from clamping or sub-1 fps are dropped."""
    if fps <= 0:
        raise InvalidInput("fps must be > 0")
    if n_frames < 1:
        raise InvalidInput("n_frames must be >= 1")
    indices: list[int] = []
    k = 0
    while k * fps < n_frames:
        idx = min(int(math.floor(k * fps + fps / 2.0)), n_frames - 1)
        if not indices or idx > indices[-1]:
            indices.append(idx)
        k += 1
    return FrameSamplingPlan(fps, indices)


def batch_frames(plan: FrameSamplingPlan, batch_size: int) -> list[CaptionBatch]:
    """Chunk the sampled indices into consecutive batches."""
    if batch_size < 1:
        raise InvalidInput("batch_size must be >= 1")
    chunks = [
        plan.indices[i:i + batch_size]
        for i in range(0, len(plan.indices), batch_size)
    ]
    batches = [CaptionBatch(i, chunk) for i, chunk in enumerate(chunks)]
    if batches:
        batches[0].is_first = True
        batches[-1].is_last = True
    return batches


def normalize_batch_text(text: str, is_first: bool, is_last: bool) -> str:
    """Enforce the cross-batch formatting rule.

    Interior batches must start with "The video continues" (a leading
    "The video begins/starts" is rewritten, otherwise the prefix is
    prepended) and must not assert that the video ends (a final-sentence
    "The video ends/concludes" becomes "The scene concludes"). True first
    and last batches pass through untouched on their respective sides.
    """
    if not text:
        raise InvalidInput("batch text must be non-empty")
    out = text
    if not is_first:
        if _BEGIN_RE.search(out):
            out = _BEGIN_RE.sub(CONTINUE_PREFIX, out, count=1)
        elif not _CONTINUE_RE.search(out):
            out = f"{CONTINUE_PREFIX}. {out}"
    if not is_last and _END_RE.search(out):
        out = _END_RE.sub(SCENE_CONCLUDES, out, count=1)
    return out


def stitch(batches: Sequence[CaptionBatch]) -> str:
    """Normalize each batch text and join with single spaces in batch order."""
    if not batches:
        raise InvalidInput("cannot stitch zero batches")
    ordered = sorted(batches, key=lambda b: b.batch_index)
    return " ".join(
        normalize_batch_text(b.text, b.is_first, b.is_last) for b in ordered
    )


def call_with_retries(
    fn: Callable[[], str],
    retries: int = DEFAULT_RETRIES,
    backoff_base: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Run ``fn`` up to ``retries`` times with exponential backoff on
    :class:`BackendError`; re-raises the last error."""
    last: Exception | None = None
    for attempt in range(retries):
        try:
            return fn()
        except BackendError as exc:
            last = exc
            if attempt < retries - 1:
                sleep(backoff_base * (2 ** attempt))
    assert last is not None
    raise last


def describe_scene(
    client: CaptionClient,
    scene_index: int,
    interval: tuple[int, int],
    fps: float,
    batch_size: int = DEFAULT_BATCH_SIZE,
    image_loader: Callable[[int], np.ndarray] | None = None,
    retries: int = DEFAULT_RETRIES,
    sleep: Callable[[float], None] = time.sleep,
) -> SceneCaption:
    """Sample, batch, caption, normalize, and stitch one scene.

    ``interval`` is (start, end_exclusive) in global frame indices; sampling
    runs on the scene's own timeline and indices are shifted back to global.
    """
    start, end = interval
    if end <= start:
        raise InvalidInput(f"empty scene interval ({start}, {end})")
    plan = sample_middle_frames(fps, end - start)
    global_plan = FrameSamplingPlan(fps, [start + i for i in plan.indices])
    batches = batch_frames(global_plan, batch_size)
    for batch in batches:
        images = (
            [image_loader(i) for i in batch.frame_indices] if image_loader else None
        )
        try:
            batch.text = call_with_retries(
                lambda b=batch, imgs=images: client.caption(
                    b.frame_indices, CAPTION_PROMPT, imgs
                ),
                retries=retries,
                sleep=sleep,
            )
        except BackendError as exc:
            raise CaptionError(scene_index, str(exc)) from exc
        if not batch.text:
            raise CaptionError(scene_index, f"empty caption for batch {batch.batch_index}")
    return SceneCaption(scene_index, stitch(batches))


@dataclass
class VideoCaptions:
    """Global narrative plus one caption per scene, in scene order."""

    global_text: str
    scenes: list[SceneCaption] = field(default_factory=list)

    def scene_texts(self) -> list[str]:
        return [c.text for c in self.scenes]
