"""Command-line interface.

Subcommands run individual pipeline stages against a run directory, or the
whole pipeline, or dataset-level utilities (reason mining, evaluation,
plot-data emission). Exit codes: 0 success, 2 configuration/manifest error,
3 stage error, 4 remote-backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pseudo_label, summary_eval
from .config import RunConfig, load_config
from .dataset import DatasetManifest, load_manifest
from .errors import (
    BackendError,
    CaptionError,
    ConfigError,
    ManifestError,
    ScoringError,
    VsumError,
)
from .pipeline import VideoRunner, load_record, run_pipeline
from .plot_data import emit_plot_data

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_BACKEND = 4

STAGE_COMMANDS = {
    "segment": ["segment"],
    "refine": ["segment", "refine"],
    "caption": ["segment", "refine", "captions"],
    "pseudolabel": ["segment", "refine", "captions", "pseudo_label"],
    "score": ["segment", "refine", "captions", "score"],
    "frames": ["segment", "refine", "captions", "score", "frames"],
    "select": ["segment", "refine", "captions", "score", "frames", "select"],
    "eval": ["segment", "refine", "captions", "score", "frames", "select", "eval"],
}


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="path to a JSON run configuration")
    parser.add_argument("--manifest", required=True, help="dataset manifest path")
    parser.add_argument("--video", help="video id (default: every video)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--budget", type=float, help="override the budget fraction")
    parser.add_argument(
        "--mock", action="store_true", help="force mock caption and LLM backends"
    )
    parser.add_argument("--out", default="runs", help="run output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vsum",
        description="Training-free video summarization pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "segment", "refine", "caption", "pseudolabel", "mine-reasons",
        "score", "frames", "select", "eval", "pipeline", "plot-data",
    ):
        cmd = sub.add_parser(name)
        _add_common(cmd)
    return parser


def _load(args) -> tuple[RunConfig, DatasetManifest]:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.budget is not None:
        overrides["budget_fraction"] = args.budget  # clears any absolute budget
    if args.mock:
        overrides["caption_backend"] = "mock"
        overrides["llm_backend"] = "mock"
    config = load_config(args.config, **overrides)
    manifest = load_manifest(args.manifest)
    return config, manifest


def _video_ids(args, manifest: DatasetManifest) -> list[str]:
    if args.video:
        return [manifest.video(args.video).id]
    return manifest.video_ids()


def _run_stages(runner: VideoRunner, stages: list[str]):
    dispatch = {
        "segment": runner.stage_segment,
        "refine": runner.stage_refine,
        "captions": runner.stage_captions,
        "pseudo_label": runner.stage_pseudo_label,
        "score": runner.stage_score,
        "frames": runner.stage_frames,
        "select": runner.stage_select,
        "eval": runner.stage_eval,
    }
    if stages[-1] == "pseudo_label":
        runner.config.enable_pseudo_label = True
    done = set(runner.record.stages)
    for stage in stages:
        if stage in done and stage != stages[-1]:
            continue  # prerequisite artifact already on disk from a prior run
        dispatch[stage]()


def cmd_stage(args, command: str) -> int:
    config, manifest = _load(args)
    stages = STAGE_COMMANDS[command]
    for video_id in _video_ids(args, manifest):
        runner = VideoRunner(config, manifest, video_id, args.out)
        _run_stages(runner, stages)
        print(f"{command}: video '{video_id}' -> {runner.run_dir / runner.record.stages[stages[-1]]}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config, manifest = _load(args)
    for video_id in _video_ids(args, manifest):
        record = run_pipeline(config, manifest, video_id, args.out)
        eval_doc = record.load_artifact("eval")
        print(
            f"pipeline: video '{video_id}' run {record.run_id} "
            f"aggregate_f1={eval_doc['aggregate_f1']:.4f}"
        )
    return EXIT_OK


def cmd_plot_data(args) -> int:
    _load(args)  # validates config/manifest pairing
    manifest = load_manifest(args.manifest)
    for video_id in _video_ids(args, manifest):
        record = load_record(Path(args.out) / video_id)
        paths = emit_plot_data(record, Path(args.out) / video_id)
        print(f"plot-data: video '{video_id}' -> {len(paths)} files")
    return EXIT_OK


def cmd_mine_reasons(args) -> int:
    """Dataset-level reason mining over the sampled pseudo-label subset."""
    config, manifest = _load(args)
    sampled = pseudo_label.sample_pseudo_videos(
        manifest.video_ids(), seed=config.seed
    )
    triples = []
    per_video = {}
    rubric = None
    client = None
    for video_id in sampled:
        runner = VideoRunner(config, manifest, video_id, args.out)
        runner.config.enable_pseudo_label = True
        _run_stages(
            runner, ["segment", "refine", "captions", "pseudo_label"]
        )
        doc = runner.record.load_artifact("pseudo_label")
        per_video[video_id] = doc["reasons"]
        triples.append(pseudo_label.ReasonTriple(**doc["reasons"]))
        rubric = runner.rubric()
        client = runner._llm_client(rubric)
    prompt = pseudo_label.build_rubric_prompt(triples, manifest.dataset_tag)
    response = client.send(prompt, config.model_id, config.temperature)
    out = Path(args.out) / "mined"
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "sampled_videos": sampled,
        "reasons": per_video,
        "rubric_prompt": prompt,
        "rubric_response": response,
    }
    (out / "reasons.json").write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    print(f"mine-reasons: {len(sampled)} videos -> {out / 'reasons.json'}")
    return EXIT_OK


def cmd_eval_dataset(args) -> int:
    """Per-video eval stages plus dataset aggregation and split averaging."""
    config, manifest = _load(args)
    per_video = {}
    for video_id in _video_ids(args, manifest):
        runner = VideoRunner(config, manifest, video_id, args.out)
        _run_stages(runner, STAGE_COMMANDS["eval"])
        per_video[video_id] = runner.record.load_artifact("eval")["aggregate_f1"]
    ids = sorted(per_video)
    spec = summary_eval.make_splits(ids, seed=config.seed)
    split_f1 = summary_eval.split_average(
        [[per_video[v] for v in test] for test in spec.test_ids], spec
    )
    doc = {
        "per_video_f1": per_video,
        "mean_f1": sum(per_video.values()) / len(per_video),
        "split_f1": split_f1,
        "splits": spec.test_ids,
    }
    out = Path(args.out) / "eval_summary.json"
    out.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(f"eval: mean_f1={doc['mean_f1']:.4f} split_f1={split_f1:.4f} -> {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "pipeline":
            return cmd_pipeline(args)
        if args.command == "plot-data":
            return cmd_plot_data(args)
        if args.command == "mine-reasons":
            return cmd_mine_reasons(args)
        if args.command == "eval":
            return cmd_eval_dataset(args)
        return cmd_stage(args, args.command)
    except (ConfigError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, CaptionError, ScoringError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except VsumError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
