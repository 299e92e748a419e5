"""Extraction job: decode -> sample frames -> embeddings -> captions ->
manifest fragment, all under one output directory."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .captions import caption_scenes, write_captions
from .decode import decode_video
from .embeddings import compute_embeddings, write_vsem
from .errors import ExtractionError
from .sampling import middle_frame_indices


@dataclass
class ExtractionJob:
    video_path: Path
    out_dir: Path
    fps_override: float | None = None
    backbone_id: str = "pixel64"
    caption_model_id: str = "template"
    stride: int = 1
    batch_size: int = 60
    segments_path: Path | None = None   # optional segmentation.json artifact
    video_id: str = field(init=False)

    def __post_init__(self):
        self.video_path = Path(self.video_path)
        self.out_dir = Path(self.out_dir)
        if self.segments_path is not None:
            self.segments_path = Path(self.segments_path)
        self.video_id = self.video_path.stem


def _load_segments(path: Path, n_frames: int) -> list[tuple[int, int]]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ExtractionError(f"cannot read segments '{path}': {exc}") from exc
    intervals = doc.get("refined") or doc.get("initial") or doc
    intervals = [(int(s), int(e)) for s, e in intervals]
    if intervals[0][0] != 0 or intervals[-1][1] != n_frames:
        raise ExtractionError(
            f"segments in '{path}' do not cover [0, {n_frames})"
        )
    return intervals


def extract_frames(job: ExtractionJob) -> dict:
    """Decode the video and export the sampled middle-of-second frames as
    JPEGs plus the index list."""
    frames, fps = decode_video(job.video_path, job.fps_override)
    indices = middle_frame_indices(fps, len(frames))
    frames_dir = job.out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for idx in indices:
        name = f"frame_{idx:06d}.jpg"
        ok = cv2.imwrite(
            str(frames_dir / name), cv2.cvtColor(frames[idx], cv2.COLOR_RGB2BGR)
        )
        if not ok:
            raise ExtractionError(f"cannot write '{frames_dir / name}'")
        files.append(name)
    doc = {"fps": fps, "n_frames": len(frames), "indices": indices, "files": files}
    (job.out_dir / "sampled_indices.json").write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return doc


def run_job(job: ExtractionJob) -> dict:
    """Full extraction; returns the manifest fragment."""
    job.out_dir.mkdir(parents=True, exist_ok=True)
    frames, fps = decode_video(job.video_path, job.fps_override)
    n_frames = len(frames)

    sampled = extract_frames(job)

    matrix = compute_embeddings(frames, job.backbone_id, job.stride)
    if len(matrix) != n_frames:
        raise ExtractionError(
            f"backbone produced {len(matrix)} rows for {n_frames} frames"
        )
    emb_path = write_vsem(job.out_dir / f"{job.video_id}.vsem", matrix)

    if job.segments_path is not None:
        segmentation = _load_segments(job.segments_path, n_frames)
    else:
        segmentation = [(0, n_frames)]
    captions = caption_scenes(
        frames, fps, segmentation, job.caption_model_id, job.video_id,
        job.batch_size,
    )
    cap_path = write_captions(job.out_dir / f"{job.video_id}_captions.json", captions)

    frames_npy = job.out_dir / f"{job.video_id}_frames.npy"
    np.save(frames_npy, frames)

    fragment = {
        "id": job.video_id,
        "fps": fps,
        "n_frames": n_frames,
        "frames_path": frames_npy.name,
        "embeddings_path": emb_path.name,
        "captions_path": cap_path.name,
        "backbone": job.backbone_id,
        "caption_model": job.caption_model_id,
        "sampled_indices": sampled["indices"],
    }
    (job.out_dir / f"{job.video_id}_manifest_fragment.json").write_text(
        json.dumps(fragment, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return fragment
