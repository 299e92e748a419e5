"""Scene division: perceptual-hash boundary detection with an adaptive
threshold, followed by embedding-based merging of overly short scenes.

A frame is reduced to a 64-bit DCT hash; consecutive-frame change is the
normalized Hamming distance between hashes. Boundaries are declared where the
change reaches a threshold picked on a grid by the steepest drop of the
scene-count curve. Scenes shorter than ``min_len`` frames are merged into
whichever neighbor is closer in mean-embedding cosine similarity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .errors import InvalidInput

HASH_BITS = 64
HASH_BLOCK = 8          # low-frequency DCT block is HASH_BLOCK x HASH_BLOCK
HASH_INPUT_SIZE = 32    # frames are resized to this square before the DCT
DEFAULT_MIN_SCENE_LEN = 150

# Luma weights for RGB -> grayscale (ITU-R BT.601).
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class GrayFrame:
    """A 32x32 grayscale frame with values in [0, 255]."""

    pixels: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (HASH_INPUT_SIZE, HASH_INPUT_SIZE):
            raise InvalidInput(
                f"GrayFrame must be {HASH_INPUT_SIZE}x{HASH_INPUT_SIZE}, "
                f"got {self.pixels.shape}"
            )
        if not np.isfinite(self.pixels).all():
            raise InvalidInput("GrayFrame pixels must be finite")
        if self.pixels.min() < 0 or self.pixels.max() > 255:
            raise InvalidInput("GrayFrame pixels must lie in [0, 255]")
        if self.frame_index < 0:
            raise InvalidInput("frame_index must be >= 0")


class PHash:
    """64-bit perceptual hash."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray):
        bits = np.asarray(bits, dtype=bool).ravel()
        if bits.shape != (HASH_BITS,):
            raise InvalidInput(f"PHash needs {HASH_BITS} bits, got {bits.shape}")
        self.bits = bits

    def __eq__(self, other):
        return isinstance(other, PHash) and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"PHash({self.to_hex()})"

    def to_hex(self) -> str:
        return f"{int(np.packbits(self.bits).view('>u8')[0]):016x}"

    @classmethod
    def from_hex(cls, text: str) -> "PHash":
        value = int(text, 16)
        bits = [(value >> (HASH_BITS - 1 - m)) & 1 for m in range(HASH_BITS)]
        return cls(np.array(bits, dtype=bool))


@dataclass
class ThresholdGrid:
    """Threshold candidates tau_min, tau_min + delta, ..., tau_max."""

    tau_min: float = 0.05
    tau_max: float = 0.60
    delta_tau: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.tau_min < 1.0 and 0.0 < self.tau_max < 1.0):
            raise InvalidInput("tau_min and tau_max must lie in (0, 1)")
        if self.tau_min >= self.tau_max:
            raise InvalidInput("tau_min must be < tau_max")
        if self.delta_tau <= 0:
            raise InvalidInput("delta_tau must be > 0")
        if len(self.points()) < 3:
            raise InvalidInput("threshold grid needs at least 3 points")

    def points(self) -> np.ndarray:
        n = int(math.floor((self.tau_max - self.tau_min) / self.delta_tau + 1e-9)) + 1
        return self.tau_min + np.arange(n) * self.delta_tau


@dataclass
class SceneSegmentation:
    """Sorted, contiguous, non-overlapping intervals covering [0, n_frames)."""

    intervals: list[tuple[int, int]]
    n_frames: int

    def __post_init__(self):
        self.intervals = [(int(s), int(e)) for s, e in self.intervals]
        if self.n_frames <= 0:
            raise InvalidInput("n_frames must be positive")
        if not self.intervals:
            raise InvalidInput("segmentation must contain at least one interval")
        cursor = 0
        for start, end in self.intervals:
            if start != cursor:
                raise InvalidInput(f"intervals not contiguous at frame {cursor}")
            if end <= start:
                raise InvalidInput(f"empty interval ({start}, {end})")
            cursor = end
        if cursor != self.n_frames:
            raise InvalidInput(
                f"intervals cover [0, {cursor}) but video has {self.n_frames} frames"
            )

    def __len__(self):
        return len(self.intervals)

    def lengths(self) -> np.ndarray:
        return np.array([e - s for s, e in self.intervals])

    def midpoints(self) -> np.ndarray:
        """Real-valued scene midpoints (start + end - 1) / 2."""
        return np.array([(s + e - 1) / 2.0 for s, e in self.intervals])

    def scene_of(self, frame: int) -> int:
        for i, (s, e) in enumerate(self.intervals):
            if s <= frame < e:
                return i
        raise InvalidInput(f"frame {frame} outside [0, {self.n_frames})")


@dataclass
class FrameEmbeddings:
    """Per-frame embedding matrix (n_frames x dim)."""

    matrix: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise InvalidInput("embedding matrix must be 2-D")
        if not np.isfinite(self.matrix).all():
            raise InvalidInput("embedding matrix must be finite")
        self.dim = self.matrix.shape[1]

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[0]


def _bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center mapping (cv2 INTER_LINEAR
    convention), edge-clamped."""
    h, w = src.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def preprocess_frame(image: np.ndarray, frame_index: int = 0) -> GrayFrame:
    """Convert an RGB (or already-gray) raster to the 32x32 luma matrix fed
    into the hash. Luma uses 0.299R + 0.587G + 0.114B."""
    image = np.asarray(image)
    if image.size == 0:
        raise InvalidInput("empty image")
    if image.ndim == 3:
        if image.shape[2] != 3:
            raise InvalidInput(f"expected 3 channels, got {image.shape[2]}")
        gray = image.astype(np.float64) @ _LUMA
    elif image.ndim == 2:
        gray = image.astype(np.float64)
    else:
        raise InvalidInput(f"expected 2-D or 3-D image, got ndim={image.ndim}")
    resized = _bilinear_resize(gray, HASH_INPUT_SIZE, HASH_INPUT_SIZE)
    return GrayFrame(np.clip(resized, 0.0, 255.0), frame_index)


def phash(frame: GrayFrame) -> PHash:
    """DCT hash: 2-D type-II DCT of the 32x32 matrix, keep the top-left 8x8
    block (DC included), set bit m iff coefficient m > median of the block."""
    coeffs = dct(dct(frame.pixels, axis=0), axis=1)
    block = coeffs[:HASH_BLOCK, :HASH_BLOCK]
    med = np.median(block)
    return PHash((block > med).ravel())


def hamming_norm(h1: PHash, h2: PHash) -> float:
    """Fraction of differing bits, in [0, 1]."""
    if h1.bits.shape != h2.bits.shape:
        raise InvalidInput("hash length mismatch")
    return float(np.mean(h1.bits != h2.bits))


def hash_frames(frames: np.ndarray) -> list[PHash]:
    """Hash every frame of an (n, H, W[, 3]) array in order."""
    return [phash(preprocess_frame(frames[t], t)) for t in range(len(frames))]


def _distance_series(hashes: list[PHash]) -> np.ndarray:
    """Consecutive-frame normalized Hamming distances (length T-1)."""
    if len(hashes) < 2:
        return np.zeros(0)
    bits = np.stack([h.bits for h in hashes])
    return (bits[:-1] != bits[1:]).mean(axis=1)


def detect_boundaries(hashes: list[PHash], tau: float) -> list[int]:
    """Indices t where the change from frame t to t+1 reaches tau."""
    if len(hashes) < 2:
        raise InvalidInput("need at least 2 hashes")
    if not 0.0 <= tau <= 1.0:
        raise InvalidInput("tau must lie in [0, 1]")
    return [int(t) for t in np.nonzero(_distance_series(hashes) >= tau)[0]]


def select_threshold(hashes: list[PHash], grid: ThresholdGrid) -> float:
    """Pick the grid threshold with the steepest drop of the scene-count
    curve N(tau); ties go to the smallest tau."""
    pts = grid.points()
    if len(pts) < 2:
        raise InvalidInput("threshold grid needs at least 2 points")
    dist = _distance_series(hashes)
    counts = np.array([1 + int((dist >= t).sum()) for t in pts], dtype=np.float64)
    delta_n = (counts[1:] - counts[:-1]) / grid.delta_tau
    # argmax of -delta_n; np.argmax returns the first (smallest-tau) maximizer
    return float(pts[int(np.argmax(-delta_n))])


def boundaries_to_intervals(boundaries: list[int], n_frames: int) -> list[tuple[int, int]]:
    """Boundary t splits between frames t and t+1."""
    starts = [0] + [b + 1 for b in sorted(boundaries)]
    ends = starts[1:] + [n_frames]
    return list(zip(starts, ends))


def segment(hashes: list[PHash], grid: ThresholdGrid | None = None) -> SceneSegmentation:
    """Full division: adaptive threshold, then boundary detection."""
    if not hashes:
        raise InvalidInput("need at least 1 frame")
    grid = grid or ThresholdGrid()
    n = len(hashes)
    if n == 1:
        return SceneSegmentation([(0, 1)], 1)
    tau_star = select_threshold(hashes, grid)
    boundaries = detect_boundaries(hashes, tau_star)
    return SceneSegmentation(boundaries_to_intervals(boundaries, n), n)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def refine_short_scenes(
    seg: SceneSegmentation,
    emb: FrameEmbeddings,
    min_len: int = DEFAULT_MIN_SCENE_LEN,
) -> SceneSegmentation:
    """Merge every scene shorter than ``min_len`` frames into the neighbor
    with the higher mean-embedding cosine similarity.

    Scans left to right, recomputing neighbor means after each merge, and
    repeats until no short scene remains. A scene with a single neighbor
    merges into it. A video shorter than ``min_len`` collapses to one scene.
    """
    if emb.n_frames != seg.n_frames:
        raise InvalidInput(
            f"embeddings cover {emb.n_frames} frames but segmentation covers "
            f"{seg.n_frames}"
        )
    if seg.n_frames < min_len:
        return SceneSegmentation([(0, seg.n_frames)], seg.n_frames)

    intervals = list(seg.intervals)

    def mean_of(iv: tuple[int, int]) -> np.ndarray:
        return emb.matrix[iv[0]:iv[1]].mean(axis=0)

    i = 0
    while i < len(intervals) and len(intervals) > 1:
        start, end = intervals[i]
        if end - start >= min_len:
            i += 1
            continue
        center = mean_of(intervals[i])
        sim_prev = _cosine(center, mean_of(intervals[i - 1])) if i > 0 else None
        sim_next = (
            _cosine(center, mean_of(intervals[i + 1]))
            if i < len(intervals) - 1
            else None
        )
        # ties merge left for determinism
        if sim_next is None or (sim_prev is not None and sim_prev >= sim_next):
            j = i - 1
        else:
            j = i + 1
        lo, hi = (j, i) if j < i else (i, j)
        intervals[lo] = (intervals[lo][0], intervals[hi][1])
        del intervals[hi]
        i = lo  # re-examine the merged scene; everything left of it is long

    return SceneSegmentation(intervals, seg.n_frames)
