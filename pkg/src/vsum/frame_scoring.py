"""Frame-level scoring: normalize scene scores, spread them over frames,
smooth across scene boundaries with a cosine schedule, and weight frames
within each scene by windowed consistency/uniqueness of their embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .scene_division import FrameEmbeddings, SceneSegmentation

NORM_MINMAX = "minmax"
NORM_EXPONENTIAL = "exponential"

STAGE_INHERITED = "inherited"
STAGE_SMOOTHED = "smoothed"
STAGE_WEIGHTED = "weighted"

DEFAULT_SHORT_THRESHOLD_S = 100.0
DEFAULT_KMAX = 10
KMEANS_MAX_ITER = 100
MIN_CLUSTER_FRAMES = 3


@dataclass
class NormalizationMode:
    variant: str = NORM_MINMAX
    exp_alpha: float = 1.0

    def __post_init__(self):
        if self.variant not in (NORM_MINMAX, NORM_EXPONENTIAL):
            raise InvalidInput(f"unknown normalization variant '{self.variant}'")
        if not np.isfinite(self.exp_alpha) or self.exp_alpha <= 0:
            raise InvalidInput("exp_alpha must be finite and positive")


@dataclass
class FrameScoreCurve:
    values: np.ndarray
    stage: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise InvalidInput("frame curve must be 1-D")
        if not np.isfinite(self.values).all():
            raise InvalidInput("frame curve values must be finite")


@dataclass
class WeightSchedule:
    sigma: float
    window_seconds: float
    short_threshold_seconds: float = DEFAULT_SHORT_THRESHOLD_S

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise InvalidInput("sigma must lie in [0, 1]")
        if self.window_seconds <= 0:
            raise InvalidInput("window_seconds must be > 0")


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    wcss: float


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def normalize(scene_scores, mode: NormalizationMode) -> np.ndarray:
    """Min-max to [0, 1]; the exponential variant then amplifies the high end
    via (e^(alpha*u) - 1) / (e^alpha - 1). All-equal inputs min-max to 0.5."""
    scores = np.asarray(scene_scores, dtype=np.float64)
    if scores.size < 1:
        raise InvalidInput("need at least one scene score")
    u = _minmax(scores)
    if mode.variant == NORM_MINMAX:
        return u
    a = mode.exp_alpha
    return (np.exp(a * u) - 1.0) / (np.exp(a) - 1.0)


def inherit(s_tilde, seg: SceneSegmentation) -> FrameScoreCurve:
    """Piecewise-constant curve: every frame takes its scene's value."""
    s_tilde = np.asarray(s_tilde, dtype=np.float64)
    if len(s_tilde) != len(seg.intervals):
        raise InvalidInput(
            f"{len(s_tilde)} scores for {len(seg.intervals)} scenes"
        )
    values = np.empty(seg.n_frames)
    for score, (start, end) in zip(s_tilde, seg.intervals):
        values[start:end] = score
    return FrameScoreCurve(values, STAGE_INHERITED)


def cosine_smooth(z0: FrameScoreCurve, seg: SceneSegmentation) -> FrameScoreCurve:
    """Blend between consecutive scene values on the interval between their
    midpoints with a raised-cosine weight; outside those intervals frames
    keep their inherited value."""
    if len(z0.values) != seg.n_frames:
        raise InvalidInput("curve length does not match segmentation")
    out = z0.values.copy()
    if len(seg.intervals) < 2:
        return FrameScoreCurve(out, STAGE_SMOOTHED)
    scene_values = np.array([z0.values[start] for start, _ in seg.intervals])
    mids = seg.midpoints()
    for i in range(len(mids) - 1):
        m0, m1 = mids[i], mids[i + 1]
        t0 = int(np.ceil(m0 - 1e-12))
        t1 = int(np.floor(m1 + 1e-12))
        if t1 < t0:
            continue
        if scene_values[i] == scene_values[i + 1]:
            out[t0:t1 + 1] = scene_values[i]  # keep equal neighbors bit-exact
            continue
        t = np.arange(t0, t1 + 1)
        alpha = (1.0 - np.cos(np.pi * (t - m0) / (m1 - m0))) / 2.0
        out[t0:t1 + 1] = (1.0 - alpha) * scene_values[i] + alpha * scene_values[i + 1]
    return FrameScoreCurve(out, STAGE_SMOOTHED)


def _pairwise_sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = (
        (x * x).sum(axis=1)[:, None]
        + (c * c).sum(axis=1)[None, :]
        - 2.0 * (x @ c.T)
    )
    return np.maximum(d2, 0.0)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = _pairwise_sq_dists(x, x[chosen]).min(axis=1)
        total = d2.sum()
        if total == 0.0:
            remaining = [i for i in range(n) if i not in set(chosen)]
            chosen.append(int(rng.choice(remaining)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
    return x[chosen].copy()


def fit_kmeans(emb, k: int, seed: int = 0) -> ClusterModel:
    """Seeded k-means++ initialization followed by Lloyd iterations until the
    assignment stabilizes (or 100 iterations); reports the within-cluster sum
    of squares."""
    x = emb.matrix if isinstance(emb, FrameEmbeddings) else np.asarray(emb, dtype=np.float64)
    n = len(x)
    if not 1 <= k <= n:
        raise InvalidInput(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(x, k, rng)
    labels = np.full(n, -1)
    for _ in range(KMEANS_MAX_ITER):
        d2 = _pairwise_sq_dists(x, centroids)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    d2 = _pairwise_sq_dists(x, centroids)
    wcss = float(d2[np.arange(n), labels].sum())
    return ClusterModel(k, centroids, labels, wcss)


def elbow_k(wcss) -> int:
    """Elbow of a WCSS curve indexed by K = 1..Kmax: the K in [2, Kmax-1]
    maximizing the discrete second difference, ties to the smaller K."""
    wcss = list(wcss)
    kmax = len(wcss)
    if kmax < 3:
        return 1
    best_k, best_curv = None, -np.inf
    for k in range(2, kmax):  # 1-based K; wcss[k - 1] is WCSS at K = k
        curv = wcss[k - 2] - 2.0 * wcss[k - 1] + wcss[k]
        if curv > best_curv:
            best_k, best_curv = k, curv
    return best_k


def consistency(window_labels) -> float:
    """Fraction of the window occupied by the modal cluster label."""
    labels = np.asarray(window_labels)
    if labels.size == 0:
        raise InvalidInput("empty window")
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max() / labels.size)


def uniqueness(window_embeddings) -> float:
    """Mean L2 distance of each embedding to the window mean."""
    x = np.asarray(window_embeddings, dtype=np.float64)
    if x.size == 0:
        raise InvalidInput("empty window")
    # translating by the first row costs nothing mathematically and makes
    # constant windows come out exactly zero
    shifted = x - x[0]
    center = shifted.mean(axis=0)
    return float(np.linalg.norm(shifted - center, axis=1).mean())


def segment_weight(c: float, u: float, sigma: float) -> float:
    """Convex mix sigma*consistency + (1-sigma)*uniqueness."""
    if not 0.0 <= sigma <= 1.0:
        raise InvalidInput("sigma must lie in [0, 1]")
    return sigma * c + (1.0 - sigma) * u


def schedule(t_seconds: float, short_threshold: float = DEFAULT_SHORT_THRESHOLD_S) -> WeightSchedule:
    """Length-based mixing schedule: long videos emphasize uniqueness with
    1 s windows, medium videos pure consistency, short videos a 3 s blend."""
    if t_seconds <= 0:
        raise InvalidInput("video duration must be > 0")
    s = short_threshold
    if t_seconds > 5 * s:
        return WeightSchedule(0.1, 1.0, s)
    if s < t_seconds <= 5 * s:
        return WeightSchedule(1.0, 1.0, s)
    return WeightSchedule(0.3, 3.0, s)


def frame_weights(
    emb: FrameEmbeddings,
    seg: SceneSegmentation,
    fps: float,
    sched: WeightSchedule,
    seed: int = 0,
    kmax: int = DEFAULT_KMAX,
) -> np.ndarray:
    """Per-frame representativeness weights.

    Per scene: cluster the scene's embeddings with K chosen by the elbow
    rule, split the scene into windows of ``window_seconds``, and give every
    frame of a window the mixed consistency/uniqueness weight. Scenes too
    short to cluster get weight 1.
    """
    if emb.n_frames != seg.n_frames:
        raise InvalidInput("embeddings do not cover the segmentation")
    if fps <= 0:
        raise InvalidInput("fps must be > 0")
    weights = np.ones(seg.n_frames)
    window_frames = max(1, int(round(sched.window_seconds * fps)))
    for scene_idx, (start, end) in enumerate(seg.intervals):
        x = emb.matrix[start:end]
        n_scene = end - start
        if n_scene < MIN_CLUSTER_FRAMES:
            continue
        k_hi = min(kmax, n_scene)
        models = [
            fit_kmeans(x, k, seed=_scene_seed(seed, scene_idx, k))
            for k in range(1, k_hi + 1)
        ]
        k_star = elbow_k([m.wcss for m in models])
        labels = models[k_star - 1].labels
        for w_start in range(0, n_scene, window_frames):
            w_end = min(w_start + window_frames, n_scene)
            c = consistency(labels[w_start:w_end])
            u = uniqueness(x[w_start:w_end])
            weights[start + w_start:start + w_end] = segment_weight(c, u, sched.sigma)
    return weights


def _scene_seed(seed: int, scene_idx: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(scene_idx, k))


def combine(z1: FrameScoreCurve, w) -> FrameScoreCurve:
    """Elementwise product of the smoothed curve and the weights, min-max
    rescaled to [0, 1] over the whole video."""
    w = np.asarray(w, dtype=np.float64)
    if len(z1.values) != len(w):
        raise InvalidInput("curve and weights have different lengths")
    return FrameScoreCurve(_minmax(z1.values * w), STAGE_WEIGHTED)
