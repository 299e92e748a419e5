"""CLI: extract embeddings, captions, sampled frames, and a manifest
fragment from one video."""

from __future__ import annotations

import argparse
import sys

from .errors import ExtractionError
from .job import ExtractionJob, run_job


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vsum-extract",
        description="Decode a video and write the summarization pipeline's inputs",
    )
    parser.add_argument("--video", required=True, help="input video path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--backbone", default="pixel64", help="embedding backbone id")
    parser.add_argument(
        "--caption-model", default="template", help="caption model id"
    )
    parser.add_argument(
        "--stride", type=int, default=1,
        help="embed every Nth frame and repeat rows in between",
    )
    parser.add_argument("--fps", type=float, help="override container fps")
    parser.add_argument(
        "--segments", help="segmentation.json from the pipeline for per-scene captions"
    )
    parser.add_argument("--batch-size", type=int, default=60)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        video_path=args.video,
        out_dir=args.out,
        fps_override=args.fps,
        backbone_id=args.backbone,
        caption_model_id=args.caption_model,
        stride=args.stride,
        batch_size=args.batch_size,
        segments_path=args.segments,
    )
    try:
        fragment = run_job(job)
    except ExtractionError as exc:
        print(f"extraction error: {exc}", file=sys.stderr)
        return 1
    print(
        f"extracted '{fragment['id']}': {fragment['n_frames']} frames at "
        f"{fragment['fps']:g} fps -> {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
