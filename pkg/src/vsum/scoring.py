"""Scene scoring: assemble boundary/contextualized prompts, dispatch them to
an LLM client, and parse single-integer scene scores.

The first and last scenes of a video are scored from their own descriptions
only ("boundary" mode); every intermediate scene additionally receives its
immediate neighbors as context-only signals plus a conservative +/-5
novelty/duplication adjustment ("contextual" mode).
"""

from __future__ import annotations

import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

from .errors import BackendError, InvalidInput, MalformedScore, ScoringError
from .pseudo_label import Rubric

DEFAULT_RETRIES = 3
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_IN_FLIGHT = 4
OUTPUT_RULE_LINE = "Output EXACTLY ONE integer in 0-100 (no words, no units)."
CONTEXT_ADJUSTMENT = 5

_INT_TOKEN_RE = re.compile(r"[+-]?\d+")

NOVELTY_NEW = "new"
NOVELTY_DUPLICATED = "duplicated"
NOVELTY_MIXED = "mixed"


class ScoreMode(str, Enum):
    BOUNDARY = "boundary"
    CONTEXTUAL = "contextual"


@dataclass
class ScoringRequest:
    scene_index: int
    target_caption: str
    global_caption: str
    rubric: Rubric
    mode: ScoreMode
    prev_caption: str | None = None
    next_caption: str | None = None
    preference: str | None = None

    def __post_init__(self):
        if self.mode is ScoreMode.BOUNDARY:
            if self.prev_caption is not None or self.next_caption is not None:
                raise InvalidInput("boundary requests carry no neighbor captions")
        elif self.prev_caption is None or self.next_caption is None:
            raise InvalidInput("contextual requests need both neighbor captions")


@dataclass
class SceneScore:
    scene_index: int
    value: int
    mode: ScoreMode
    attempt_count: int = 1

    def __post_init__(self):
        if not 0 <= self.value <= 100:
            raise InvalidInput(f"scene score {self.value} outside [0, 100]")


class LLMClient(Protocol):
    """LLM backend contract; transient failures raise :class:`BackendError`."""

    backend_id: str

    def send(self, prompt: str, model_id: str, temperature: float) -> str:
        ...


@dataclass
class MockSceneFeatures:
    """Offline per-scene fixture the deterministic mock scorer consumes."""

    dimensions: Sequence[float]
    penalty_triggers: Sequence[str] = ()
    novelty: str = NOVELTY_MIXED
    preference_match: int = 0

    def __post_init__(self):
        for d in self.dimensions:
            if not 0 <= d <= 100:
                raise InvalidInput(f"dimension score {d} outside [0, 100]")
        if self.novelty not in (NOVELTY_NEW, NOVELTY_DUPLICATED, NOVELTY_MIXED):
            raise InvalidInput(f"unknown novelty flag '{self.novelty}'")


def _preference_block(preference: str | None) -> list[str]:
    if preference is None:
        return []
    return ["", "USER PREFERENCE:", preference]


def build_boundary_prompt(req: ScoringRequest) -> str:
    """Target-only prompt for the first/last scene of a video."""
    if req.mode is not ScoreMode.BOUNDARY:
        raise InvalidInput(f"expected boundary mode, got {req.mode}")
    rules = [
        "1) Use the dataset-specific rubric above.",
        "2) Inputs: (a) Global video description; (b) Target scene description.",
        "3) No local context: ignore previous/next scenes entirely.",
        "4) Score ONLY the target scene per rubric dimensions and penalties.",
    ]
    if req.preference is not None:
        rules.append(
            "5) A user preference is provided below; apply a small modifier to "
            "the Relevance dimension only."
        )
    rules.append(f"{len(rules) + 1}) {OUTPUT_RULE_LINE}")
    parts = [
        "You are scoring one scene of a video for summarization.",
        "",
        f"SCORING RUBRIC ({req.rubric.name}):",
        req.rubric.render_text(),
        "",
        "Instructions:",
        *rules,
        "",
        "GLOBAL VIDEO DESCRIPTION:",
        req.global_caption,
        "",
        "TARGET SCENE DESCRIPTION:",
        req.target_caption,
        *_preference_block(req.preference),
    ]
    return "\n".join(parts)


def build_context_prompt(req: ScoringRequest) -> str:
    """Contextualized prompt for intermediate scenes: neighbors are supplied
    as context-only signals with a conservative +/-5 adjustment."""
    if req.mode is not ScoreMode.CONTEXTUAL:
        raise InvalidInput(f"expected contextual mode, got {req.mode}")
    rules = [
        "1) Use the dataset-specific rubric above.",
        "2) Inputs: (a) Target scene (score this); (b) Global video description; "
        "(c) Previous scene (context only); (d) Next scene (context only).",
        "3) Internally refine Previous and Next into 1-2 short notes each: "
        "who/what action, stage (setup/key/aftermath), new vs. repeated info, "
        "visibility; do NOT reveal these notes.",
        "4) Base score comes PRIMARILY from the Target + Global per rubric; "
        "neighbors are only for a small adjustment.",
        "5) Apply a conservative context adjustment (+/-5): +5 if the Target "
        "clearly adds NEW information/progression vs. BOTH neighbors; -5 if "
        "largely DUPLICATED vs. BOTH; 0 if unclear/mixed.",
    ]
    if req.preference is not None:
        rules.append(
            "6) A user preference is provided below; apply ONLY a subtle "
            "modifier to Relevance (at most +/-5); do not alter other dimensions."
        )
    rules.append(
        f"{len(rules) + 1}) Always SCORE ONLY THE TARGET; neighbors are "
        "reference signals, not items to be scored."
    )
    rules.append(f"{len(rules) + 1}) {OUTPUT_RULE_LINE}")
    parts = [
        "You are scoring one scene of a video for summarization.",
        "",
        f"SCORING RUBRIC ({req.rubric.name}):",
        req.rubric.render_text(),
        "",
        "Instructions:",
        *rules,
        "",
        "GLOBAL VIDEO DESCRIPTION:",
        req.global_caption,
        "",
        "TARGET SCENE DESCRIPTION (score this):",
        req.target_caption,
        "",
        "PREVIOUS SCENE (context only):",
        req.prev_caption or "",
        "",
        "NEXT SCENE (context only):",
        req.next_caption or "",
        *_preference_block(req.preference),
    ]
    return "\n".join(parts)


def build_prompt(req: ScoringRequest) -> str:
    if req.mode is ScoreMode.BOUNDARY:
        return build_boundary_prompt(req)
    return build_context_prompt(req)


def parse_score(text: str) -> int:
    """Accept exactly one integer in [0, 100].

    Strict pass: the trimmed response is a single integer token. Lenient
    fallback: the response contains exactly one integer token overall.
    """
    stripped = text.strip()
    if _INT_TOKEN_RE.fullmatch(stripped):
        value = int(stripped)
        if 0 <= value <= 100:
            return value
        raise MalformedScore(f"score {value} outside [0, 100]")
    tokens = _INT_TOKEN_RE.findall(text)
    if len(tokens) != 1:
        raise MalformedScore(
            f"expected exactly one integer, found {len(tokens)}: {text!r}"
        )
    value = int(tokens[0])
    if 0 <= value <= 100:
        return value
    raise MalformedScore(f"score {value} outside [0, 100]")


def assign_modes(n_scenes: int, use_context: bool = True) -> list[ScoreMode]:
    """First and last scenes are boundary-scored; the rest contextual (unless
    contextual scoring is disabled)."""
    if n_scenes < 1:
        raise InvalidInput("need at least one scene")
    modes = []
    for i in range(n_scenes):
        boundary = i == 0 or i == n_scenes - 1 or not use_context
        modes.append(ScoreMode.BOUNDARY if boundary else ScoreMode.CONTEXTUAL)
    return modes


def build_requests(
    captions: Sequence[str],
    global_caption: str,
    rubric: Rubric,
    preference: str | None = None,
    use_context: bool = True,
) -> list[ScoringRequest]:
    modes = assign_modes(len(captions), use_context)
    requests = []
    for i, mode in enumerate(modes):
        requests.append(
            ScoringRequest(
                scene_index=i,
                target_caption=captions[i],
                global_caption=global_caption,
                rubric=rubric,
                mode=mode,
                prev_caption=captions[i - 1] if mode is ScoreMode.CONTEXTUAL else None,
                next_caption=captions[i + 1] if mode is ScoreMode.CONTEXTUAL else None,
                preference=preference,
            )
        )
    return requests


def score_scenes(
    client: LLMClient,
    captions: Sequence[str],
    global_caption: str,
    rubric: Rubric,
    preference: str | None = None,
    *,
    model_id: str = "default",
    temperature: float = DEFAULT_TEMPERATURE,
    retries: int = DEFAULT_RETRIES,
    use_context: bool = True,
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    cache=None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[SceneScore]:
    """Score every scene, retrying malformed/transient responses up to
    ``retries`` times per scene; results are ordered by scene index."""
    requests = build_requests(captions, global_caption, rubric, preference, use_context)

    def score_one(req: ScoringRequest) -> SceneScore:
        prompt = build_prompt(req)
        if cache is not None:
            cached = cache.get_score(prompt, model_id)
            if cached is not None:
                return SceneScore(req.scene_index, cached, req.mode, attempt_count=0)
        last_error: Exception | None = None
        for attempt in range(1, retries + 1):
            try:
                text = client.send(prompt, model_id, temperature)
                value = parse_score(text)
            except (BackendError, MalformedScore) as exc:
                last_error = exc
                if attempt < retries:
                    sleep(2 ** (attempt - 1))
                continue
            if cache is not None:
                cache.put_score(prompt, model_id, value)
            return SceneScore(req.scene_index, value, req.mode, attempt_count=attempt)
        raise ScoringError(req.scene_index, str(last_error))

    if max_in_flight <= 1 or len(requests) == 1:
        return [score_one(r) for r in requests]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(score_one, requests))


def mock_rubric_score(
    features: MockSceneFeatures,
    rubric: Rubric,
    is_contextual: bool = False,
) -> int:
    """Deterministic rubric arithmetic: weighted dimensions plus triggered
    penalties plus the bounded preference modifier plus the +/-5 context
    adjustment, rounded half-up and clamped to [0, 100]."""
    if len(features.dimensions) != len(rubric.dimensions):
        raise InvalidInput(
            f"{len(features.dimensions)} dimension scores for a rubric with "
            f"{len(rubric.dimensions)} dimensions"
        )
    total = sum(
        d.weight * score for d, score in zip(rubric.dimensions, features.dimensions)
    )
    total += sum(rubric.penalty_value(name) for name in features.penalty_triggers)
    bound = rubric.preference_adjustment_bound
    total += max(-bound, min(bound, features.preference_match))
    if is_contextual:
        if features.novelty == NOVELTY_NEW:
            total += CONTEXT_ADJUSTMENT
        elif features.novelty == NOVELTY_DUPLICATED:
            total -= CONTEXT_ADJUSTMENT
    # round half up; the epsilon absorbs float error in the weighted sum
    value = math.floor(total + 0.5 + 1e-9)
    return max(0, min(100, value))
