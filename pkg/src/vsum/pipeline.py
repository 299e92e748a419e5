"""Run orchestration: executes segment -> refine -> captions -> optional
pseudo-label mining -> scene scoring -> frame curve -> selection -> eval for
one video, persisting every intermediate artifact under the run directory.

With mock backends a run is a pure function of (config, manifest, seed):
every artifact except the wall-clock fields of record.json is byte-identical
across reruns.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import caption_pipeline, frame_scoring, pseudo_label, scoring, summary_eval
from .backends import (
    HttpCaptionClient,
    HttpLLMClient,
    MockCaptionClient,
    MockLLMClient,
    ResponseCache,
)
from .caption_pipeline import SceneCaption, VideoCaptions
from .config import BACKEND_HTTP, RunConfig
from .dataset import ANNOTATION_MASKS, ANNOTATION_SCORES, DatasetManifest, VideoEntry
from .embedding_io import load_embeddings
from .errors import BackendError, MalformedReason, StageError, VsumError
from .pseudo_label import Rubric, builtin_rubric, load_rubric
from .scene_division import (
    FrameEmbeddings,
    SceneSegmentation,
    ThresholdGrid,
    boundaries_to_intervals,
    detect_boundaries,
    hash_frames,
    refine_short_scenes,
    select_threshold,
)
from .summary_eval import SelectionBudget, Summary

STAGE_FILES = {
    "segment": "segmentation.json",
    "refine": "segmentation.json",  # refinement updates the segment artifact
    "captions": "captions.json",
    "pseudo_label": "pseudo_label.json",
    "score": "scene_scores.json",
    "frames": "frame_curve.json",
    "select": "summary.json",
    "eval": "eval.json",
}
RECORD_FILE = "record.json"


@dataclass
class RunRecord:
    run_id: str
    video_id: str
    config: dict
    run_dir: Path
    stages: dict = field(default_factory=dict)      # stage -> artifact filename
    wall_clock: dict = field(default_factory=dict)  # stage -> seconds

    def artifact_path(self, stage: str) -> Path:
        if stage not in self.stages:
            raise StageError(stage, f"no artifact recorded for video '{self.video_id}'")
        return self.run_dir / self.stages[stage]

    def load_artifact(self, stage: str) -> dict:
        path = self.artifact_path(stage)
        if not path.is_file():
            raise StageError(stage, f"artifact '{path}' is missing")
        return json.loads(path.read_text(encoding="utf-8"))

    def save(self):
        doc = {
            "run_id": self.run_id,
            "video_id": self.video_id,
            "config": self.config,
            "stages": self.stages,
            "wall_clock": self.wall_clock,
        }
        _write_json(self.run_dir / RECORD_FILE, doc)


def load_record(run_dir: str | Path) -> RunRecord:
    run_dir = Path(run_dir)
    path = run_dir / RECORD_FILE
    if not path.is_file():
        raise StageError("record", f"no run record at '{path}'")
    doc = json.loads(path.read_text(encoding="utf-8"))
    return RunRecord(
        run_id=doc["run_id"],
        video_id=doc["video_id"],
        config=doc["config"],
        run_dir=run_dir,
        stages=doc["stages"],
        wall_clock=doc["wall_clock"],
    )


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


def _round_list(values, digits: int = 10) -> list[float]:
    # fixed rounding keeps JSON artifacts byte-stable across platforms
    return [round(float(v), digits) for v in values]


class VideoRunner:
    """Stage-by-stage executor for one video. Stages persist their artifacts
    and later stages reload prerequisites from disk, so the CLI can run any
    stage in isolation against an existing run directory."""

    def __init__(
        self,
        config: RunConfig,
        manifest: DatasetManifest,
        video_id: str,
        out_dir: str | Path,
    ):
        self.config = config
        self.manifest = manifest
        self.video: VideoEntry = manifest.video(video_id)
        self.run_dir = Path(out_dir) / video_id
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.record = RunRecord(
            run_id=self._run_id(),
            video_id=video_id,
            config=config.snapshot(),
            run_dir=self.run_dir,
        )
        # resume from an existing record only when config and video match;
        # a changed configuration starts a fresh record over stale artifacts
        existing = self.run_dir / RECORD_FILE
        if existing.is_file():
            try:
                previous = load_record(self.run_dir)
            except (StageError, ValueError, KeyError):
                previous = None
            if previous is not None and previous.run_id == self.record.run_id:
                self.record.stages = previous.stages
                self.record.wall_clock = previous.wall_clock
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self._frames: np.ndarray | None = None
        self._embeddings: FrameEmbeddings | None = None

    def _run_id(self) -> str:
        key = json.dumps(
            {
                "config": self.config.snapshot(),
                "dataset": self.manifest.dataset_tag,
                "video": self.video.id,
                "n_frames": self.video.n_frames,
            },
            sort_keys=True,
        )
        return hashlib.sha256(key.encode()).hexdigest()[:12]

    # ------------------------------------------------------------------ io

    def _persist(self, stage: str, doc: dict) -> None:
        name = STAGE_FILES[stage]
        _write_json(self.run_dir / name, doc)
        self.record.stages[stage] = name
        self.record.save()

    def _load_stage(self, stage: str) -> dict:
        path = self.run_dir / STAGE_FILES[stage]
        if not path.is_file():
            raise StageError(
                stage,
                f"artifact '{path}' is missing; run the '{stage}' stage first",
            )
        return json.loads(path.read_text(encoding="utf-8"))

    def _timed(self, stage: str, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except VsumError:
            raise
        except Exception as exc:  # decode/IO errors become stage errors
            raise StageError(stage, f"video '{self.video.id}': {exc}") from exc
        self.record.wall_clock[stage] = time.perf_counter() - start
        self.record.save()
        return result

    def frames(self) -> np.ndarray:
        if self._frames is None:
            path = self.video.frames_path
            if path is None:
                raise StageError(
                    "segment", f"video '{self.video.id}' has no frames_path in the manifest"
                )
            if not Path(path).is_file():
                raise StageError("segment", f"frames file '{path}' does not exist")
            self._frames = np.load(path)
            if len(self._frames) != self.video.n_frames:
                raise StageError(
                    "segment",
                    f"frames file '{path}' has {len(self._frames)} frames, "
                    f"manifest says {self.video.n_frames}",
                )
        return self._frames

    def embeddings(self, stage: str) -> FrameEmbeddings:
        if self._embeddings is None:
            path = self.video.embeddings_path
            if path is None:
                raise StageError(
                    stage,
                    f"video '{self.video.id}' has no embeddings_path in the manifest",
                )
            if not Path(path).is_file():
                raise StageError(stage, f"embeddings file '{path}' does not exist")
            self._embeddings = load_embeddings(path)
            if self._embeddings.n_frames != self.video.n_frames:
                raise StageError(
                    stage,
                    f"embeddings file '{path}' covers {self._embeddings.n_frames} "
                    f"frames, manifest says {self.video.n_frames}",
                )
        return self._embeddings

    def _grid(self) -> ThresholdGrid:
        return ThresholdGrid(
            self.config.tau_min, self.config.tau_max, self.config.delta_tau
        )

    def rubric(self) -> Rubric:
        tag = self.config.rubric
        if tag in ("tvsum", "summe", "qfvs"):
            return builtin_rubric(tag)
        return load_rubric(tag)

    def _budget(self) -> SelectionBudget:
        if self.config.budget_absolute is not None:
            return SelectionBudget(absolute=self.config.budget_absolute)
        return SelectionBudget(fraction=self.config.budget_fraction)

    def _caption_client(self):
        if self.config.caption_backend == BACKEND_HTTP:
            return HttpCaptionClient(
                self.config.caption_endpoint, self.config.caption_api_key
            )
        return MockCaptionClient(self.config.seed)

    def _llm_client(self, rubric: Rubric):
        if self.config.llm_backend == BACKEND_HTTP:
            return HttpLLMClient(self.config.llm_endpoint, self.config.llm_api_key)
        return MockLLMClient(self.config.seed, rubric)

    # -------------------------------------------------------------- stages

    def stage_segment(self) -> SceneSegmentation:
        def run():
            if self.video.segments is not None:
                intervals = self.video.segments
                tau_star = None
            elif self.video.n_frames == 1:
                intervals, tau_star = [(0, 1)], None
            else:
                hashes = hash_frames(self.frames())
                tau_star = select_threshold(hashes, self._grid())
                boundaries = detect_boundaries(hashes, tau_star)
                intervals = boundaries_to_intervals(boundaries, self.video.n_frames)
            self._persist(
                "segment",
                {
                    "n_frames": self.video.n_frames,
                    "tau_star": tau_star,
                    "initial": [list(iv) for iv in intervals],
                    "refined": None,
                },
            )
            return SceneSegmentation(intervals, self.video.n_frames)

        return self._timed("segment", run)

    def stage_refine(self) -> SceneSegmentation:
        def run():
            doc = self._load_stage("segment")
            initial = SceneSegmentation(
                [tuple(iv) for iv in doc["initial"]], doc["n_frames"]
            )
            if self.config.enable_refine:
                refined = refine_short_scenes(
                    initial, self.embeddings("refine"), self.config.min_scene_len
                )
            else:
                refined = initial
            doc["refined"] = [list(iv) for iv in refined.intervals]
            self._persist("refine", doc)
            return refined

        return self._timed("refine", run)

    def refined_segmentation(self) -> SceneSegmentation:
        doc = self._load_stage("segment")
        if doc.get("refined") is None:
            raise StageError("refine", "segmentation has not been refined yet")
        return SceneSegmentation([tuple(iv) for iv in doc["refined"]], doc["n_frames"])

    def stage_captions(self) -> VideoCaptions:
        def run():
            seg = self.refined_segmentation()
            if self.video.captions_path is not None:
                captions = self._load_precomputed_captions(seg)
            else:
                captions = self._generate_captions(seg)
            self._persist(
                "captions",
                {
                    "video_id": self.video.id,
                    "global": captions.global_text,
                    "scenes": [
                        {
                            "scene_index": c.scene_index,
                            "start": seg.intervals[c.scene_index][0],
                            "end": seg.intervals[c.scene_index][1],
                            "text": c.text,
                        }
                        for c in captions.scenes
                    ],
                },
            )
            return captions

        return self._timed("captions", run)

    def _load_precomputed_captions(self, seg: SceneSegmentation) -> VideoCaptions:
        path = self.video.captions_path
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StageError("captions", f"cannot read captions '{path}': {exc}")
        scenes = doc.get("scenes", [])
        if len(scenes) != len(seg.intervals):
            raise StageError(
                "captions",
                f"'{path}' has {len(scenes)} scene captions but the segmentation "
                f"has {len(seg.intervals)} scenes",
            )
        return VideoCaptions(
            global_text=doc["global"],
            scenes=[
                SceneCaption(int(s["scene_index"]), s["text"]) for s in scenes
            ],
        )

    def _generate_captions(self, seg: SceneSegmentation) -> VideoCaptions:
        client = self._caption_client()
        loader = None
        if self.video.frames_path is not None and Path(self.video.frames_path).is_file():
            frames = self.frames()
            loader = lambda i: frames[i]  # noqa: E731

        def caption_interval(args) -> SceneCaption:
            scene_index, interval, kind = args
            if self.cache is not None:
                hit = self.cache.get_caption(
                    self.video.id, interval, kind, client.backend_id
                )
                if hit is not None:
                    return SceneCaption(scene_index, hit)
            result = caption_pipeline.describe_scene(
                client,
                scene_index,
                interval,
                self.video.fps,
                self.config.batch_size,
                image_loader=loader,
                retries=self.config.retries,
            )
            if self.cache is not None:
                self.cache.put_caption(
                    self.video.id, interval, kind, client.backend_id, result.text
                )
            return result

        jobs = [(i, iv, "scene") for i, iv in enumerate(seg.intervals)]
        if self.config.concurrency > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
                scene_captions = list(pool.map(caption_interval, jobs))
        else:
            scene_captions = [caption_interval(j) for j in jobs]
        global_caption = caption_interval((-1, (0, self.video.n_frames), "global"))
        return VideoCaptions(global_text=global_caption.text, scenes=scene_captions)

    def stage_pseudo_label(self) -> dict | None:
        if not self.config.enable_pseudo_label:
            return None

        def run():
            if self.video.annotation_type != ANNOTATION_SCORES:
                raise StageError(
                    "pseudo_label",
                    f"video '{self.video.id}' has no frame-score annotations",
                )
            seg = self.refined_segmentation()
            captions_doc = self._load_stage("captions")
            g = pseudo_label.FrameAnnotations(
                self.video.mean_annotation(), self.video.n_frames
            )
            seg_scores = pseudo_label.segment_scores(g, seg)
            exemplars = pseudo_label.select_exemplars(
                seg_scores, [s["text"] for s in captions_doc["scenes"]]
            )
            reason_prompt = pseudo_label.build_reason_prompt(exemplars)
            rubric = self.rubric()
            client = self._llm_client(rubric)
            triple = self._mine_reasons(client, reason_prompt)
            rubric_prompt = pseudo_label.build_rubric_prompt(
                [triple], self.manifest.dataset_tag
            )
            rubric_response = client.send(
                rubric_prompt, self.config.model_id, self.config.temperature
            )
            doc = {
                "segment_scores": _round_list(seg_scores.scores),
                "high": [
                    {"segment_index": e.segment_index, "score": round(e.score, 10)}
                    for e in exemplars.high
                ],
                "low": [
                    {"segment_index": e.segment_index, "score": round(e.score, 10)}
                    for e in exemplars.low
                ],
                "reason_prompt": reason_prompt,
                "reasons": {
                    "reason_positive": triple.reason_positive,
                    "reason_negative": triple.reason_negative,
                    "reason_difference": triple.reason_difference,
                },
                "rubric_prompt": rubric_prompt,
                "rubric_response": rubric_response,
            }
            self._persist("pseudo_label", doc)
            return doc

        return self._timed("pseudo_label", run)

    def _mine_reasons(self, client, prompt: str) -> pseudo_label.ReasonTriple:
        last: Exception | None = None
        for _ in range(self.config.retries):
            try:
                text = client.send(
                    prompt, self.config.model_id, self.config.temperature
                )
                return pseudo_label.parse_reason_json(text)
            except (MalformedReason, BackendError) as exc:
                last = exc
        raise StageError("pseudo_label", f"reason mining failed: {last}")

    def stage_score(self) -> list[scoring.SceneScore]:
        def run():
            captions_doc = self._load_stage("captions")
            rubric = self.rubric()
            client = self._llm_client(rubric)
            scores = scoring.score_scenes(
                client,
                [s["text"] for s in captions_doc["scenes"]],
                captions_doc["global"],
                rubric,
                preference=self.video.query,
                model_id=self.config.model_id,
                temperature=self.config.temperature,
                retries=self.config.retries,
                use_context=self.config.use_context,
                max_in_flight=self.config.concurrency,
                cache=self.cache,
            )
            self._persist(
                "score",
                {
                    "rubric": rubric.name,
                    "scores": [
                        {
                            "scene_index": s.scene_index,
                            "value": s.value,
                            "mode": s.mode.value,
                            "attempt_count": s.attempt_count,
                        }
                        for s in scores
                    ],
                },
            )
            return scores

        return self._timed("score", run)

    def stage_frames(self) -> frame_scoring.FrameScoreCurve:
        def run():
            seg = self.refined_segmentation()
            score_doc = self._load_stage("score")
            values = [s["value"] for s in score_doc["scores"]]
            mode = frame_scoring.NormalizationMode(
                self.config.normalization, self.config.exp_alpha
            )
            s_tilde = frame_scoring.normalize(values, mode)
            z0 = frame_scoring.inherit(s_tilde, seg)
            z1 = frame_scoring.cosine_smooth(z0, seg)
            duration_s = self.video.n_frames / self.video.fps
            sched = frame_scoring.schedule(
                duration_s, self.config.short_threshold_seconds
            )
            if self.config.schedule_sigma is not None:
                sched = frame_scoring.WeightSchedule(
                    self.config.schedule_sigma,
                    self.config.schedule_window_seconds or sched.window_seconds,
                    self.config.short_threshold_seconds,
                )
            weights = frame_scoring.frame_weights(
                self.embeddings("frames"), seg, self.video.fps, sched,
                seed=self.config.seed,
            )
            weighted = frame_scoring.combine(z1, weights)
            self._persist(
                "frames",
                {
                    "normalization": self.config.normalization,
                    "schedule": {"sigma": sched.sigma, "window_seconds": sched.window_seconds},
                    "normalized_scene_scores": _round_list(s_tilde),
                    "inherited": _round_list(z0.values),
                    "smoothed": _round_list(z1.values),
                    "weights": _round_list(weights),
                    "weighted": _round_list(weighted.values),
                    "user_mean_annotation": _round_list(self.video.mean_annotation()),
                },
            )
            return weighted

        return self._timed("frames", run)

    def stage_select(self) -> Summary:
        def run():
            seg = self.refined_segmentation()
            curve = np.array(self._load_stage("frames")["weighted"])
            budget = self._budget()
            if self.manifest.dataset_tag == "qfvs":
                shots = summary_eval.uniform_shot_intervals(
                    self.video.n_frames, self.video.fps
                )
                shot_scores = summary_eval.shot_scores_from_frames(curve, shots)
                capacity = budget.capacity(len(shots))
                chosen = summary_eval.greedy_shot_select(shot_scores, capacity)
                mask = np.zeros(self.video.n_frames, dtype=bool)
                for i in chosen:
                    s, e = shots[i]
                    mask[s:e] = True
                summary = Summary(mask)
                selected = chosen
            else:
                summary = summary_eval.select_keyshots(curve, seg.intervals, budget)
                selected = [
                    i for i, (s, e) in enumerate(seg.intervals) if summary.selected[s]
                ]
            self._persist(
                "select",
                {
                    "budget": {
                        "fraction": budget.fraction,
                        "absolute": budget.absolute,
                    },
                    "selected_segments": selected,
                    "mask": [int(x) for x in summary.selected],
                },
            )
            return summary

        return self._timed("select", run)

    def stage_eval(self) -> dict:
        def run():
            mask = np.array(self._load_stage("select")["mask"], dtype=bool)
            doc = evaluate_video(
                mask,
                self.video,
                self.manifest.dataset_tag,
                self._budget(),
                model_curve=np.array(self._load_stage("frames")["weighted"]),
                gt_intervals=self.video.segments
                or self.refined_segmentation().intervals,
            )
            self._persist("eval", doc)
            return doc

        return self._timed("eval", run)

    def run_all(self) -> RunRecord:
        self.stage_segment()
        self.stage_refine()
        self.stage_captions()
        self.stage_pseudo_label()
        self.stage_score()
        self.stage_frames()
        self.stage_select()
        self.stage_eval()
        from .plot_data import emit_plot_data

        emit_plot_data(self.record, self.run_dir)
        return self.record


def evaluate_video(
    mask: np.ndarray,
    video: VideoEntry,
    dataset_tag: str,
    budget: SelectionBudget,
    model_curve: np.ndarray | None = None,
    gt_intervals: list[tuple[int, int]] | None = None,
) -> dict:
    """Per-user keyshot P/R/F1 plus the dataset aggregate for one video.

    ``gt_intervals`` are the segments used to convert score annotations into
    reference keyshots (externally supplied segments win over the pipeline's
    own segmentation); uniform 5 s shots are the fallback.
    """
    per_user = []
    if dataset_tag == "qfvs":
        shots = summary_eval.uniform_shot_intervals(video.n_frames, video.fps)
        curve = model_curve if model_curve is not None else mask.astype(float)
        model_shot_scores = summary_eval.shot_scores_from_frames(curve, shots)
        for user_mask in video.annotations:
            ref_shots = summary_eval.shot_scores_from_frames(user_mask, shots) > 0.5
            budget_shots = int(ref_shots.sum())
            chosen = summary_eval.greedy_shot_select(model_shot_scores, budget_shots)
            model_shots = np.zeros(len(shots), dtype=bool)
            model_shots[chosen] = True
            result = summary_eval.precision_recall_f1(model_shots, ref_shots)
            per_user.append(result)
    else:
        intervals = (
            gt_intervals or video.segments or _fallback_intervals(video)
        )
        for user_annotation in video.annotations:
            if video.annotation_type == ANNOTATION_MASKS:
                ref = Summary(user_annotation > 0.5)
            else:
                ref = summary_eval.gt_to_keyshots(user_annotation, intervals, budget)
            result = summary_eval.precision_recall_f1(Summary(mask), ref)
            per_user.append(result)
    aggregate = summary_eval.aggregate_users(
        [r.f1 for r in per_user],
        dataset_tag,
    )
    return {
        "dataset": dataset_tag,
        "per_user": [
            {
                "precision": round(r.precision, 10),
                "recall": round(r.recall, 10),
                "f1": round(r.f1, 10),
            }
            for r in per_user
        ],
        "aggregate_f1": round(float(aggregate), 10),
    }


def _fallback_intervals(video: VideoEntry) -> list[tuple[int, int]]:
    # ground-truth conversion needs segments; fall back to uniform 5 s shots
    return summary_eval.uniform_shot_intervals(video.n_frames, video.fps)


def run_pipeline(
    config: RunConfig,
    manifest: DatasetManifest,
    video_id: str,
    out_dir: str | Path,
) -> RunRecord:
    """Execute every stage for one video and return the completed record."""
    return VideoRunner(config, manifest, video_id, out_dir).run_all()
