"""Pseudo-label mining: map frame-level ground truth onto segments, pick
high/low exemplar scenes, build the reason-mining and rubric-synthesis
prompts, and load/validate structured scoring rubrics.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .caption_pipeline import SceneCaption
from .errors import InvalidInput, InvalidRubric, MalformedReason
from .scene_division import SceneSegmentation

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-9
DEFAULT_EXEMPLARS = 3
DEFAULT_PSEUDO_RATIO = 0.10
OUTPUT_RULE = "one integer in [0,100]"

REASON_KEYS = ("reason_positive", "reason_negative", "reason_difference")

REASON_INSTRUCTION = """You will write THREE concrete reasons for this video and return STRICT JSON with the keys:
- "reason_positive": one succinct but specific reason why the HIGH-score segments are key.
- "reason_negative": one succinct but specific reason why the LOW-score segments are not key.
- "reason_difference": one succinct but specific reason explaining their essential difference."""


@dataclass
class FrameAnnotations:
    """Per-frame ground-truth importance in [0, 1]."""

    scores: np.ndarray
    n_frames: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (self.n_frames,):
            raise InvalidInput(
                f"annotations have length {self.scores.shape} but n_frames is "
                f"{self.n_frames}"
            )
        if not np.isfinite(self.scores).all():
            raise InvalidInput("annotation scores must be finite")
        if self.scores.min() < 0.0 or self.scores.max() > 1.0:
            raise InvalidInput("annotation scores must lie in [0, 1]")


@dataclass
class SegmentScoreSet:
    """One ground-truth-derived score per segment."""

    scores: np.ndarray
    segmentation: SceneSegmentation


@dataclass
class Exemplar:
    segment_index: int
    caption: str
    score: float


@dataclass
class ExemplarSet:
    high: list[Exemplar]
    low: list[Exemplar]


@dataclass
class ReasonTriple:
    reason_positive: str
    reason_negative: str
    reason_difference: str


@dataclass
class RubricDimension:
    name: str
    weight: float
    description: str
    symbol: str = ""

    def __post_init__(self):
        if not self.symbol:
            letters = [c for c in self.name if c.isalpha()]
            self.symbol = letters[0].upper() if letters else "X"


@dataclass
class RubricPenalty:
    name: str
    value: int
    trigger: str = ""


@dataclass
class Rubric:
    """Structured scoring specification: weighted dimensions, penalties,
    calibration text, and the exact output rule."""

    name: str
    dimensions: list[RubricDimension]
    penalties: list[RubricPenalty] = field(default_factory=list)
    preference_adjustment_bound: int = 5
    calibration_notes: str = ""
    output_rule: str = OUTPUT_RULE

    def __post_init__(self):
        if not self.dimensions:
            raise InvalidRubric("rubric needs at least one dimension")
        total = sum(d.weight for d in self.dimensions)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidRubric(f"dimension weights sum to {total}, expected 1.0")
        for d in self.dimensions:
            if not 0.0 < d.weight < 1.0:
                raise InvalidRubric(f"weight of '{d.name}' must lie in (0, 1)")
        for p in self.penalties:
            if p.value > 0:
                raise InvalidRubric(f"penalty '{p.name}' must be <= 0, got {p.value}")

    def weights(self) -> np.ndarray:
        return np.array([d.weight for d in self.dimensions])

    def penalty_value(self, name: str) -> int:
        for p in self.penalties:
            if p.name == name:
                return p.value
        raise InvalidInput(f"unknown penalty '{name}'")

    def render_text(self) -> str:
        """Render the rubric block embedded into scoring prompts."""
        lines = []
        for i, d in enumerate(self.dimensions, start=1):
            cap = int(round(d.weight * 100))
            lines.append(f"{i}) {d.name} (0-{cap})")
            lines.append(f"   - {d.description}")
        if self.penalties:
            lines.append(
                "Penalties: "
                + ", ".join(f"{p.name} ({p.value})" for p in self.penalties)
            )
        formula = " + ".join(f"{d.weight:.2f}{d.symbol}" for d in self.dimensions)
        lines.append(f"Final score = round({formula} + PrefAdj), clamp [0,100].")
        lines.append(f"Output exactly {self.output_rule}.")
        if self.calibration_notes:
            lines.append(f"Calibration: {self.calibration_notes}")
        return "\n".join(lines)


def segment_scores(g: FrameAnnotations, seg: SceneSegmentation) -> SegmentScoreSet:
    """Arithmetic mean of the frame scores inside each segment."""
    if g.n_frames != seg.n_frames:
        raise InvalidInput(
            f"annotations cover {g.n_frames} frames, segmentation {seg.n_frames}"
        )
    means = np.array([g.scores[s:e].mean() for s, e in seg.intervals])
    return SegmentScoreSet(means, seg)


def normalize_raw_annotations(raw: np.ndarray, lo: float = 1.0, hi: float = 5.0) -> np.ndarray:
    """Map raw per-annotator scores on [lo, hi] into [0, 1] and average users.

    ``raw`` is (n_users, n_frames); the result is a length-n_frames curve.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise InvalidInput("raw annotations must be (n_users, n_frames)")
    if hi <= lo:
        raise InvalidInput("hi must exceed lo")
    return ((raw - lo) / (hi - lo)).mean(axis=0)


def select_exemplars(
    s: SegmentScoreSet,
    captions: Sequence[SceneCaption | str],
    k: int = DEFAULT_EXEMPLARS,
) -> ExemplarSet:
    """Top-k and bottom-k segments by score; ties resolved toward the lower
    segment index. With fewer than 2k segments, k shrinks to floor(n/2)."""
    n = len(s.scores)
    if len(captions) != n:
        raise InvalidInput(f"{len(captions)} captions for {n} segments")
    if n < 2 * k:
        k = n // 2
        logger.warning("only %d segments; reducing exemplar count to k=%d", n, k)
    texts = [c.text if isinstance(c, SceneCaption) else c for c in captions]
    ranking = sorted(range(n), key=lambda i: (-s.scores[i], i))
    high = [Exemplar(i, texts[i], float(s.scores[i])) for i in ranking[:k]]
    low = [
        Exemplar(i, texts[i], float(s.scores[i]))
        for i in reversed(ranking[n - k:])
    ] if k else []
    return ExemplarSet(high, low)


def build_reason_prompt(ex: ExemplarSet) -> str:
    """Reason-mining prompt: exemplar captions with scores plus the strict
    three-key JSON instruction."""
    if not ex.high or not ex.low:
        raise InvalidInput("exemplar set must contain high and low segments")
    lines = ["HIGH-score segments:"]
    for e in ex.high:
        lines.append(f"- segment {e.segment_index} (score {e.score:.4f}): {e.caption}")
    lines.append("")
    lines.append("LOW-score segments:")
    for e in ex.low:
        lines.append(f"- segment {e.segment_index} (score {e.score:.4f}): {e.caption}")
    lines.append("")
    lines.append(REASON_INSTRUCTION)
    return "\n".join(lines)


def parse_reason_json(text: str) -> ReasonTriple:
    """Extract the first JSON object in the text and require the three reason
    keys with non-empty string values."""
    decoder = json.JSONDecoder()
    pos = text.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pos = text.find("{", pos + 1)
            continue
        if not isinstance(obj, dict):
            pos = text.find("{", pos + 1)
            continue
        values = []
        for key in REASON_KEYS:
            value = obj.get(key)
            if not isinstance(value, str) or not value.strip():
                raise MalformedReason(f"missing or empty key '{key}'")
            values.append(value)
        return ReasonTriple(*values)
    raise MalformedReason("no JSON object found in response")


def build_rubric_prompt(reasons: Sequence[ReasonTriple], dataset_tag: str) -> str:
    """Second-stage abstraction prompt turning mined reasons into a rubric."""
    if not reasons:
        raise InvalidInput("need at least one reason triple")
    lines = [
        f"You are designing a scene-importance scoring rubric for the "
        f"'{dataset_tag}' dataset from the mined rationales below.",
        "",
        "Mined rationales:",
    ]
    for i, r in enumerate(reasons):
        lines.append(f"[video {i}]")
        lines.append(f"  positive: {r.reason_positive}")
        lines.append(f"  negative: {r.reason_negative}")
        lines.append(f"  difference: {r.reason_difference}")
    lines += [
        "",
        "Instructions:",
        "(i) Cluster recurring positive/negative/difference cues across videos.",
        "(ii) Elevate the clusters into weighted evaluation dimensions with "
        "explicit constraints and penalties.",
        f"(iii) Add category-specific checklists capturing '{dataset_tag}' "
        "idiosyncrasies.",
        "(iv) Formalize a calibration ladder and the exact output rule: "
        f"output exactly {OUTPUT_RULE}.",
    ]
    return "\n".join(lines)


def load_rubric(source: dict | str | Path) -> Rubric:
    """Load a rubric from a parsed document or a JSON-compatible file."""
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidRubric(f"cannot read rubric '{source}': {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise InvalidRubric("rubric document must be a JSON object")
    try:
        dimensions = [
            RubricDimension(
                name=d["name"],
                weight=float(d["weight"]),
                description=d.get("description", ""),
                symbol=d.get("symbol", ""),
            )
            for d in doc["dimensions"]
        ]
        penalties = [
            RubricPenalty(name=p["name"], value=int(p["value"]), trigger=p.get("trigger", ""))
            for p in doc.get("penalties", [])
        ]
        return Rubric(
            name=doc.get("name", "unnamed"),
            dimensions=dimensions,
            penalties=penalties,
            preference_adjustment_bound=int(doc.get("preference_adjustment_bound", 5)),
            calibration_notes=doc.get("calibration_notes", ""),
            output_rule=doc.get("output_rule", OUTPUT_RULE),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRubric(f"malformed rubric document: {exc}") from exc


def builtin_rubric(tag: str) -> Rubric:
    """Load one of the shipped rubric documents (tvsum, summe, qfvs)."""
    path = resources.files("vsum").joinpath(f"rubrics/{tag}.rubric")
    if not path.is_file():
        raise InvalidRubric(f"no built-in rubric named '{tag}'")
    return load_rubric(json.loads(path.read_text(encoding="utf-8")))


def sample_pseudo_videos(
    video_ids: Sequence[str],
    ratio: float = DEFAULT_PSEUDO_RATIO,
    seed: int = 0,
) -> list[str]:
    """Seeded sample of ceil(ratio * n) video ids without replacement,
    returned in original manifest order."""
    if not video_ids:
        raise InvalidInput("video id list is empty")
    if not 0.0 < ratio <= 1.0:
        raise InvalidInput("ratio must lie in (0, 1]")
    count = math.ceil(ratio * len(video_ids))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(video_ids), size=count, replace=False)
    return [video_ids[i] for i in sorted(chosen)]


def qfvs_shot_annotations(
    oracle_selected_shots: set[int] | Sequence[int],
    n_shots: int,
) -> np.ndarray:
    """Binary per-shot labels: 1 for oracle-selected shots, 0 otherwise."""
    if n_shots < 1:
        raise InvalidInput("n_shots must be >= 1")
    labels = np.zeros(n_shots, dtype=np.int8)
    for idx in oracle_selected_shots:
        if not 0 <= idx < n_shots:
            raise InvalidInput(f"shot index {idx} out of range [0, {n_shots})")
        labels[idx] = 1
    return labels
