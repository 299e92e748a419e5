"""Dataset manifest: the neutral JSON input carrying per-video metadata,
per-user annotations, and paths to precomputed frames/embeddings/captions.
Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError

ANNOTATION_SCORES = "scores"
ANNOTATION_MASKS = "keyshot_masks"
KNOWN_DATASETS = ("summe", "tvsum", "qfvs")


@dataclass
class VideoEntry:
    id: str
    fps: float
    n_frames: int
    annotations: np.ndarray            # (n_users, n_frames) in [0, 1]
    annotation_type: str = ANNOTATION_SCORES
    segments: list[tuple[int, int]] | None = None
    frames_path: Path | None = None
    embeddings_path: Path | None = None
    captions_path: Path | None = None
    query: str | None = None

    def mean_annotation(self) -> np.ndarray:
        return self.annotations.mean(axis=0)


@dataclass
class DatasetManifest:
    dataset_tag: str
    videos: list[VideoEntry]
    base_dir: Path = field(default_factory=Path)

    def video(self, video_id: str) -> VideoEntry:
        for v in self.videos:
            if v.id == video_id:
                return v
        raise ManifestError(f"video '{video_id}' not found in manifest")

    def video_ids(self) -> list[str]:
        return [v.id for v in self.videos]


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ManifestError(f"{where}: missing field '{key}'")
    return doc[key]


def _parse_video(doc: dict, idx: int, base_dir: Path) -> VideoEntry:
    where = f"videos[{idx}]"
    if not isinstance(doc, dict):
        raise ManifestError(f"{where}: must be an object")
    vid = _require(doc, "id", where)
    where = f"videos[{idx}] ('{vid}')"
    fps = float(_require(doc, "fps", where))
    if fps <= 0:
        raise ManifestError(f"{where}.fps: must be > 0, got {fps}")
    n_frames = int(_require(doc, "n_frames", where))
    if n_frames < 1:
        raise ManifestError(f"{where}.n_frames: must be >= 1, got {n_frames}")

    raw = _require(doc, "annotations", where)
    if not isinstance(raw, list) or not raw:
        raise ManifestError(f"{where}.annotations: need at least one user entry")
    for u, entry in enumerate(raw):
        if len(entry) != n_frames:
            raise ManifestError(
                f"{where}.annotations[{u}]: length {len(entry)} != n_frames {n_frames}"
            )
    annotations = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(annotations).all():
        raise ManifestError(f"{where}.annotations: values must be finite")
    if annotations.min() < 0.0 or annotations.max() > 1.0:
        raise ManifestError(f"{where}.annotations: values must lie in [0, 1]")

    annotation_type = doc.get("annotation_type", ANNOTATION_SCORES)
    if annotation_type not in (ANNOTATION_SCORES, ANNOTATION_MASKS):
        raise ManifestError(
            f"{where}.annotation_type: unknown type '{annotation_type}'"
        )

    segments = None
    if doc.get("segments") is not None:
        segments = [(int(s), int(e)) for s, e in doc["segments"]]
        cursor = 0
        for s, e in segments:
            if s != cursor or e <= s:
                raise ManifestError(
                    f"{where}.segments: intervals must be contiguous and non-empty"
                )
            cursor = e
        if cursor != n_frames:
            raise ManifestError(
                f"{where}.segments: cover [0, {cursor}) but n_frames is {n_frames}"
            )

    def resolve(key: str) -> Path | None:
        value = doc.get(key)
        return (base_dir / value) if value is not None else None

    return VideoEntry(
        id=str(vid),
        fps=fps,
        n_frames=n_frames,
        annotations=annotations,
        annotation_type=annotation_type,
        segments=segments,
        frames_path=resolve("frames_path"),
        embeddings_path=resolve("embeddings_path"),
        captions_path=resolve("captions_path"),
        query=doc.get("query"),
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a manifest; violations are reported with the field
    path and the offending video id."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest '{path}' is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest root must be an object")
    tag = _require(doc, "dataset", "manifest")
    if tag not in KNOWN_DATASETS:
        raise ManifestError(
            f"manifest.dataset: unknown tag '{tag}' (expected one of {KNOWN_DATASETS})"
        )
    videos_doc = _require(doc, "videos", "manifest")
    if not isinstance(videos_doc, list) or not videos_doc:
        raise ManifestError("manifest.videos: need at least one video")
    base_dir = path.parent
    videos = [_parse_video(v, i, base_dir) for i, v in enumerate(videos_doc)]
    ids = [v.id for v in videos]
    if len(set(ids)) != len(ids):
        raise ManifestError("manifest.videos: duplicate video ids")
    return DatasetManifest(dataset_tag=tag, videos=videos, base_dir=base_dir)
