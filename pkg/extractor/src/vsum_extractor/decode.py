"""Video decoding via OpenCV (no ffmpeg binary required in this environment;
frame timestamps and fps are trusted from container metadata)."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .errors import ExtractionError


def decode_video(path: str | Path, fps_override: float | None = None) -> tuple[np.ndarray, float]:
    """Decode every frame as RGB uint8; returns (frames, fps)."""
    path = Path(path)
    if not path.is_file():
        raise ExtractionError(f"video '{path}' does not exist")
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise ExtractionError(f"cannot open video '{path}'")
    fps = fps_override or float(capture.get(cv2.CAP_PROP_FPS))
    frames = []
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
    capture.release()
    if not frames:
        raise ExtractionError(f"video '{path}' produced no frames")
    if fps <= 0:
        raise ExtractionError(
            f"video '{path}' reports fps {fps}; pass an fps override"
        )
    return np.stack(frames), fps
