"""Plot-data emission: per-stage CSVs mirroring the pipeline's progression
(initial boundaries, refined boundaries, scene scores spread over frames,
normalized & smoothed curve, final frame-level curve). Rendering is out of
scope; these files feed external plotting.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .errors import StageMissing
from .pipeline import RunRecord

PLOT_FILES = (
    "plot_boundaries_initial.csv",
    "plot_boundaries_refined.csv",
    "plot_scene_scores.csv",
    "plot_smoothed.csv",
    "plot_frame_scores.csv",
)


def _write_csv(path: Path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _boundary_rows(intervals) -> list[list]:
    return [[i, start, end] for i, (start, end) in enumerate(intervals)]


def _curve_rows(curve, annotation) -> list[list]:
    return [
        [t, repr(round(float(a), 10)), repr(round(float(v), 10))]
        for t, (a, v) in enumerate(zip(annotation, curve))
    ]


def emit_plot_data(record: RunRecord, out_path: str | Path) -> list[Path]:
    """Write the five stage files for a completed run; re-emission is
    idempotent. Raises :class:`StageMissing` if the run is incomplete."""
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)

    for stage in ("segment", "score", "frames"):
        if stage not in record.stages:
            raise StageMissing(
                f"run '{record.run_id}' has no '{stage}' stage; cannot emit plot data"
            )
    seg_doc = record.load_artifact("segment")
    if seg_doc.get("refined") is None:
        raise StageMissing("segmentation has not been refined; run the refine stage")
    score_doc = record.load_artifact("score")
    frames_doc = record.load_artifact("frames")

    annotation = frames_doc["user_mean_annotation"]
    n_frames = seg_doc["n_frames"]

    # frame-wise scene score lookup (raw 0-100 values before normalization)
    scene_curve = [0.0] * n_frames
    for (start, end), entry in zip(seg_doc["refined"], score_doc["scores"]):
        for t in range(start, end):
            scene_curve[t] = float(entry["value"])

    boundary_header = ["scene_index", "start_frame", "end_frame_exclusive"]
    curve_header = ["frame_index", "user_mean_annotation", "model_score"]
    paths = [
        _write_csv(out / PLOT_FILES[0], boundary_header, _boundary_rows(seg_doc["initial"])),
        _write_csv(out / PLOT_FILES[1], boundary_header, _boundary_rows(seg_doc["refined"])),
        _write_csv(out / PLOT_FILES[2], curve_header, _curve_rows(scene_curve, annotation)),
        _write_csv(out / PLOT_FILES[3], curve_header, _curve_rows(frames_doc["smoothed"], annotation)),
        _write_csv(out / PLOT_FILES[4], curve_header, _curve_rows(frames_doc["weighted"], annotation)),
    ]
    return paths
