"""Keyshot selection under a duration budget and keyshot P/R/F1 evaluation
with per-dataset aggregation (max over users for SumMe, mean for TVSum) and
averaging over evaluation splits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

DEFAULT_BUDGET_FRACTION = 0.15
DEFAULT_N_SPLITS = 5
DEFAULT_TEST_FRACTION = 0.2

DATASET_SUMME = "summe"
DATASET_TVSUM = "tvsum"
DATASET_QFVS = "qfvs"


@dataclass
class SelectionBudget:
    """Duration cap: either a fraction of the video or an absolute count
    (frames for segment datasets, shots for uniform-shot datasets)."""

    fraction: float | None = None
    absolute: int | None = None

    def __post_init__(self):
        if (self.fraction is None) == (self.absolute is None):
            raise InvalidInput("set exactly one of fraction / absolute")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise InvalidInput("budget fraction must lie in (0, 1]")
        if self.absolute is not None and self.absolute < 0:
            raise InvalidInput("absolute budget must be >= 0")

    def capacity(self, total: int) -> int:
        if self.absolute is not None:
            return self.absolute
        return int(math.floor(self.fraction * total))


@dataclass
class Summary:
    """Binary per-frame (or per-shot) selection mask."""

    selected: np.ndarray

    def __post_init__(self):
        self.selected = np.asarray(self.selected).astype(bool)
        if self.selected.ndim != 1:
            raise InvalidInput("summary mask must be 1-D")

    def __len__(self):
        return len(self.selected)

    def count(self) -> int:
        return int(self.selected.sum())


@dataclass
class EvalResult:
    precision: float
    recall: float
    f1: float


@dataclass
class SplitSpec:
    """Deterministic evaluation splits: test video ids per split."""

    seed: int
    n_splits: int = DEFAULT_N_SPLITS
    test_ids: list[list[str]] = field(default_factory=list)


def knapsack_select(segment_values, segment_lengths, capacity_frames: int) -> list[int]:
    """Exact 0/1 knapsack: maximize total value subject to total length <=
    capacity. Among equal-value solutions the lexicographically smallest
    index set wins (earlier indices preferred, no zero-value padding).

    Memory is O(n_segments * capacity) for the dynamic-programming table.
    """
    values = [float(v) for v in segment_values]
    lengths = [int(w) for w in segment_lengths]
    if len(values) != len(lengths):
        raise InvalidInput("values and lengths differ in length")
    if any(w <= 0 for w in lengths):
        raise InvalidInput("segment lengths must be positive")
    if capacity_frames < 0:
        raise InvalidInput("capacity must be >= 0")
    n = len(values)
    if n == 0 or capacity_frames == 0:
        return []

    cap = capacity_frames
    # best[i][c] = max value achievable with items i.. and capacity c
    best = np.zeros((n + 1, cap + 1))
    for i in range(n - 1, -1, -1):
        w, v = lengths[i], values[i]
        best[i] = best[i + 1]
        if w <= cap:
            np.maximum(best[i + 1, w:], best[i + 1, :cap + 1 - w] + v, out=best[i, w:])

    selected: list[int] = []
    c = cap
    for i in range(n):
        if best[i][c] == 0.0:
            break  # nothing of value remains; stopping keeps the set minimal
        w, v = lengths[i], values[i]
        # same float expression used to build the table, so equality is exact
        if w <= c and v + best[i + 1][c - w] == best[i][c]:
            selected.append(i)
            c -= w
    return selected


def greedy_shot_select(shot_scores, budget_shots: int) -> list[int]:
    """Top-``budget_shots`` shots by score; ties go to the lower index."""
    scores = np.asarray(shot_scores, dtype=np.float64)
    if budget_shots > len(scores):
        raise InvalidInput(
            f"budget {budget_shots} exceeds {len(scores)} shots"
        )
    if budget_shots < 0:
        raise InvalidInput("budget must be >= 0")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(order[:budget_shots])


def shot_scores_from_frames(frame_scores, shot_intervals) -> np.ndarray:
    """Mean frame score inside each shot; intervals must partition the frames."""
    scores = np.asarray(frame_scores, dtype=np.float64)
    cursor = 0
    for start, end in shot_intervals:
        if start != cursor or end <= start:
            raise InvalidInput(
                f"shot intervals do not partition the frames at {cursor}"
            )
        cursor = end
    if cursor != len(scores):
        raise InvalidInput(
            f"shot intervals cover {cursor} frames, scores have {len(scores)}"
        )
    return np.array([scores[s:e].mean() for s, e in shot_intervals])


def uniform_shot_intervals(n_frames: int, fps: float, shot_seconds: float = 5.0) -> list[tuple[int, int]]:
    """Non-overlapping fixed-duration shots covering all frames; the final
    partial shot is kept."""
    if n_frames < 1 or fps <= 0 or shot_seconds <= 0:
        raise InvalidInput("need n_frames >= 1, fps > 0, shot_seconds > 0")
    size = max(1, int(round(shot_seconds * fps)))
    return [(s, min(s + size, n_frames)) for s in range(0, n_frames, size)]


def precision_recall_f1(a: Summary | np.ndarray, b: Summary | np.ndarray) -> EvalResult:
    """Temporal-overlap precision/recall/F1 between generated summary A and
    reference summary B."""
    mask_a = a.selected if isinstance(a, Summary) else np.asarray(a).astype(bool)
    mask_b = b.selected if isinstance(b, Summary) else np.asarray(b).astype(bool)
    if mask_a.shape != mask_b.shape:
        raise InvalidInput(
            f"mask lengths differ: {mask_a.shape} vs {mask_b.shape}"
        )
    inter = float(np.logical_and(mask_a, mask_b).sum())
    n_a, n_b = float(mask_a.sum()), float(mask_b.sum())
    precision = inter / n_a if n_a > 0 else 0.0
    recall = inter / n_b if n_b > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalResult(precision, recall, f1)


def aggregate_users(per_user_f1, dataset: str) -> float:
    """Max over users for SumMe, mean for TVSum."""
    values = list(per_user_f1)
    if not values:
        raise InvalidInput("need at least one user F1")
    if dataset == DATASET_SUMME:
        return float(max(values))
    if dataset in (DATASET_TVSUM, DATASET_QFVS):
        return float(np.mean(values))
    raise InvalidInput(f"unknown dataset '{dataset}'")


def split_average(per_video_f1_per_split, spec: SplitSpec) -> float:
    """Mean over splits of the per-split mean video F1."""
    splits = [list(s) for s in per_video_f1_per_split]
    if len(splits) != spec.n_splits:
        raise InvalidInput(
            f"expected {spec.n_splits} splits, got {len(splits)}"
        )
    means = []
    for i, split in enumerate(splits):
        if not split:
            raise InvalidInput(f"split {i} has no videos")
        means.append(float(np.mean(split)))
    return float(np.mean(means))


def make_splits(
    video_ids,
    n_splits: int = DEFAULT_N_SPLITS,
    seed: int = 0,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    exclude=(),
) -> SplitSpec:
    """Seeded independent test splits over the evaluation pool; excluded ids
    (e.g. pseudo-label videos) never appear in a test set."""
    pool = [v for v in video_ids if v not in set(exclude)]
    if not pool:
        raise InvalidInput("no videos left after exclusion")
    count = max(1, int(round(test_fraction * len(pool))))
    spec = SplitSpec(seed=seed, n_splits=n_splits)
    for s in range(n_splits):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s,)))
        chosen = rng.choice(len(pool), size=count, replace=False)
        spec.test_ids.append([pool[i] for i in sorted(chosen)])
    return spec


def select_keyshots(frame_scores, intervals, budget: SelectionBudget) -> Summary:
    """Knapsack selection of segments: value = mean frame score x length,
    expanded back to a frame mask."""
    scores = np.asarray(frame_scores, dtype=np.float64)
    n_frames = len(scores)
    lengths = [e - s for s, e in intervals]
    values = [scores[s:e].mean() * (e - s) for s, e in intervals]
    chosen = knapsack_select(values, lengths, budget.capacity(n_frames))
    mask = np.zeros(n_frames, dtype=bool)
    for i in chosen:
        s, e = intervals[i]
        mask[s:e] = True
    return Summary(mask)


def gt_to_keyshots(frame_annotations, intervals, budget: SelectionBudget) -> Summary:
    """Convert one user's frame-level annotation curve into a keyshot summary
    under the budget (the segment-dataset protocol for score annotations)."""
    return select_keyshots(frame_annotations, intervals, budget)
