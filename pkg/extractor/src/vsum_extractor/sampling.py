"""Frame sampling schedule: the middle frame of each whole second.

This must agree bit-for-bit with the consuming pipeline's sampler
(floor(k*fps + fps/2) clamped to the last frame, duplicates dropped).
"""

from __future__ import annotations

import math

from .errors import ExtractionError


def middle_frame_indices(fps: float, n_frames: int) -> list[int]:
    if fps <= 0 or n_frames < 1:
        raise ExtractionError("need fps > 0 and n_frames >= 1")
    indices: list[int] = []
    k = 0
    while k * fps < n_frames:
        idx = min(int(math.floor(k * fps + fps / 2.0)), n_frames - 1)
        if not indices or idx > indices[-1]:
            indices.append(idx)
        k += 1
    return indices
