"""Scene division: hashing, boundary detection, threshold selection, and
short-scene refinement, each checked against an independent oracle."""

import numpy as np
import pytest

from vsum.errors import InvalidInput
from vsum.scene_division import (
    FrameEmbeddings,
    GrayFrame,
    PHash,
    SceneSegmentation,
    ThresholdGrid,
    boundaries_to_intervals,
    detect_boundaries,
    hamming_norm,
    phash,
    preprocess_frame,
    refine_short_scenes,
    segment,
    select_threshold,
)

rng = np.random.default_rng(20240817)


# --------------------------------------------------------------- oracles

def dct2_reference(matrix):
    """Direct-summation 2-D type-II DCT (unnormalized), independent of the
    FFT-based implementation path."""
    n = matrix.shape[0]
    out = np.zeros_like(matrix, dtype=np.float64)
    grid = np.arange(n)
    for k in range(n):
        basis = np.cos(np.pi * k * (2 * grid + 1) / (2 * n))
        out[k] = 2.0 * basis @ matrix
    final = np.zeros_like(out)
    for k in range(n):
        basis = np.cos(np.pi * k * (2 * grid + 1) / (2 * n))
        final[:, k] = 2.0 * out @ basis
    return final


def phash_reference(pixels):
    coeffs = dct2_reference(np.asarray(pixels, dtype=np.float64))
    block = coeffs[:8, :8]
    return PHash((block > np.median(block)).ravel())


def brute_force_threshold(hashes, grid):
    """Recompute N(tau) through detect_boundaries and take the argmax of the
    negated forward difference, smallest tau on ties."""
    pts = grid.points()
    counts = [1 + len(detect_boundaries(hashes, t)) for t in pts]
    drops = [
        -(counts[i + 1] - counts[i]) / grid.delta_tau for i in range(len(pts) - 1)
    ]
    best = max(range(len(drops)), key=lambda i: (drops[i], -i))
    return float(pts[best])


def hashes_with_flip_counts(flips, seed=0):
    """Chain of hashes where step i differs from its predecessor in exactly
    flips[i] bits, so consecutive distances are flips[i] / 64."""
    local = np.random.default_rng(seed)
    bits = local.integers(0, 2, size=64).astype(bool)
    out = [PHash(bits.copy())]
    for count in flips:
        positions = local.choice(64, size=count, replace=False)
        bits = bits.copy()
        bits[positions] = ~bits[positions]
        out.append(PHash(bits.copy()))
    return out


def checkerboard(offset, cell=8):
    idx = (np.add.outer(np.arange(32), np.arange(32) + offset) // cell) % 2
    return idx * 255.0


# ------------------------------------------------------- preprocess_frame

def test_preprocess_white_image():
    frame = preprocess_frame(np.full((100, 100, 3), 255, dtype=np.uint8))
    assert frame.pixels.shape == (32, 32)
    np.testing.assert_allclose(frame.pixels, 255.0, atol=1e-9)


def test_preprocess_black_image():
    frame = preprocess_frame(np.zeros((50, 70, 3), dtype=np.uint8))
    np.testing.assert_allclose(frame.pixels, 0.0, atol=1e-9)


def test_preprocess_half_black_half_white():
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    img[:, 32:] = 255
    frame = preprocess_frame(img)
    assert frame.pixels[:, :14].max() < 10.0
    assert frame.pixels[:, 18:].min() > 245.0


def test_preprocess_matches_reference_bilinear():
    cv2 = pytest.importorskip("cv2")
    img = rng.integers(0, 256, size=(97, 53, 3)).astype(np.uint8)
    ours = preprocess_frame(img).pixels
    gray = img.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    expected = cv2.resize(gray.astype(np.float32), (32, 32), interpolation=cv2.INTER_LINEAR)
    np.testing.assert_allclose(ours, expected, atol=2e-3)


def test_preprocess_rejects_empty():
    with pytest.raises(InvalidInput):
        preprocess_frame(np.zeros((0, 0, 3)))


# ------------------------------------------------------------------ phash

def test_phash_constant_white_sets_only_dc():
    h = phash(GrayFrame(np.full((32, 32), 255.0)))
    assert int(h.bits.sum()) == 1
    assert bool(h.bits[0])  # the DC coefficient is the single positive one


def test_phash_constant_black_sets_no_bits():
    h = phash(GrayFrame(np.zeros((32, 32))))
    assert int(h.bits.sum()) == 0


def test_phash_deterministic():
    pixels = rng.uniform(0, 255, size=(32, 32))
    assert phash(GrayFrame(pixels)) == phash(GrayFrame(pixels.copy()))


def test_phash_matches_reference_dct():
    for _ in range(20):
        pixels = rng.uniform(0, 255, size=(32, 32))
        assert phash(GrayFrame(pixels)) == phash_reference(pixels)


def test_phash_offset_checkerboards_differ():
    # checkerboards put exact zeros all over the DCT block, so the oracle and
    # the FFT path may break median ties differently; the derived distance
    # property must hold on both paths independently
    h1, h2 = phash(GrayFrame(checkerboard(0))), phash(GrayFrame(checkerboard(1)))
    r1, r2 = phash_reference(checkerboard(0)), phash_reference(checkerboard(1))
    assert hamming_norm(h1, h2) > 0.2
    assert hamming_norm(r1, r2) > 0.2


def test_phash_hex_roundtrip():
    h = phash(GrayFrame(rng.uniform(0, 255, size=(32, 32))))
    assert PHash.from_hex(h.to_hex()) == h


# ----------------------------------------------------------- hamming_norm

def test_hamming_identical_is_zero():
    h = PHash(rng.integers(0, 2, 64).astype(bool))
    assert hamming_norm(h, h) == 0.0


def test_hamming_complement_is_one():
    bits = rng.integers(0, 2, 64).astype(bool)
    assert hamming_norm(PHash(bits), PHash(~bits)) == 1.0


def test_hamming_sixteen_flipped_bits():
    bits = rng.integers(0, 2, 64).astype(bool)
    flipped = bits.copy()
    flipped[:16] = ~flipped[:16]
    assert hamming_norm(PHash(bits), PHash(flipped)) == pytest.approx(0.25)


def test_hamming_is_a_scaled_metric():
    for _ in range(100):
        a, b, c = (PHash(rng.integers(0, 2, 64).astype(bool)) for _ in range(3))
        dab, dba = hamming_norm(a, b), hamming_norm(b, a)
        assert dab == dba
        assert hamming_norm(a, a) == 0.0
        assert dab <= hamming_norm(a, c) + hamming_norm(c, b) + 1e-12
        if dab == 0.0:
            assert a == b


# ------------------------------------------------------ detect_boundaries

def test_detect_identical_hashes_no_boundaries():
    h = PHash(rng.integers(0, 2, 64).astype(bool))
    assert detect_boundaries([h] * 10, tau=0.3) == []


def test_detect_tau_zero_marks_everything():
    hashes = hashes_with_flip_counts([0, 5, 0, 64])
    assert detect_boundaries(hashes, tau=0.0) == [0, 1, 2, 3]


def test_detect_single_complement_flip():
    hashes = hashes_with_flip_counts([0] * 10 + [64] + [0] * 5)
    assert detect_boundaries(hashes, tau=0.5) == [10]


def test_detect_monotone_in_tau():
    hashes = hashes_with_flip_counts(list(rng.integers(0, 65, size=40)))
    for _ in range(20):
        t1, t2 = sorted(rng.uniform(0, 1, size=2))
        b1 = set(detect_boundaries(hashes, t1))
        b2 = set(detect_boundaries(hashes, t2))
        assert b2 <= b1


def test_detect_rejects_short_input():
    with pytest.raises(InvalidInput):
        detect_boundaries([PHash(np.zeros(64, dtype=bool))], 0.5)


# ------------------------------------------------------- select_threshold

def test_threshold_constant_counts_pick_tau_min():
    # no distances at all: N(tau) == 1 on the whole grid
    hashes = hashes_with_flip_counts([0] * 20)
    grid = ThresholdGrid(0.05, 0.60, 0.05)
    assert select_threshold(hashes, grid) == pytest.approx(0.05)


def test_threshold_spec_count_curve():
    # scene counts [50, 48, 40, 12, 10, 9] over grid 0.10..0.35 step 0.05:
    # build consecutive distances realizing exactly that curve
    flips = (
        [7] * 2       # in [0.10, 0.15)
        + [10] * 8    # in [0.15, 0.20)
        + [13] * 28   # in [0.20, 0.25)
        + [16] * 2    # in [0.25, 0.30)
        + [20] * 1    # in [0.30, 0.35)
        + [23] * 8    # >= 0.35
        + [0] * 3
    )
    hashes = hashes_with_flip_counts(flips, seed=7)
    grid = ThresholdGrid(0.10, 0.35, 0.05)
    counts = [1 + len(detect_boundaries(hashes, t)) for t in grid.points()]
    assert counts == [50, 48, 40, 12, 10, 9]
    assert select_threshold(hashes, grid) == pytest.approx(0.20)


def test_threshold_equal_steps_tie_break_to_tau_min():
    # monotone gentle decay with equal drops everywhere
    flips = [8] * 1 + [11] * 1 + [14] * 1 + [20] * 6 + [0] * 4
    hashes = hashes_with_flip_counts(flips, seed=3)
    grid = ThresholdGrid(0.10, 0.30, 0.05)
    counts = [1 + len(detect_boundaries(hashes, t)) for t in grid.points()]
    assert counts == [10, 9, 8, 7, 7]
    assert select_threshold(hashes, grid) == pytest.approx(0.10)


def test_threshold_matches_brute_force_on_random_sequences():
    for trial in range(50):
        flips = list(rng.integers(0, 65, size=int(rng.integers(5, 60))))
        hashes = hashes_with_flip_counts(flips, seed=trial)
        grid = ThresholdGrid(0.05, 0.60, 0.05)
        assert select_threshold(hashes, grid) == pytest.approx(
            brute_force_threshold(hashes, grid)
        )


def test_threshold_lies_on_grid():
    grid = ThresholdGrid(0.05, 0.60, 0.05)
    for trial in range(20):
        flips = list(rng.integers(0, 65, size=30))
        tau = select_threshold(hashes_with_flip_counts(flips, seed=trial), grid)
        assert any(abs(tau - p) < 1e-12 for p in grid.points())


def test_grid_validation():
    with pytest.raises(InvalidInput):
        ThresholdGrid(0.5, 0.4, 0.05)
    with pytest.raises(InvalidInput):
        ThresholdGrid(0.1, 0.2, 0.2)  # fewer than 3 points


# ---------------------------------------------------------------- segment

def test_segment_single_frame():
    h = PHash(np.zeros(64, dtype=bool))
    seg = segment([h])
    assert seg.intervals == [(0, 1)]


def test_segment_no_boundaries_single_interval():
    hashes = hashes_with_flip_counts([0] * 29)
    seg = segment(hashes)
    assert seg.intervals == [(0, 30)]


def test_segment_boundary_splits_after_frame():
    assert boundaries_to_intervals([10, 20], 30) == [(0, 11), (11, 21), (21, 30)]
    flips = [0] * 30
    flips[10] = 64
    flips[20] = 64
    hashes = hashes_with_flip_counts(flips[:29])
    seg = segment(hashes)
    assert seg.intervals == [(0, 11), (11, 21), (21, 30)]


def test_segment_partitions_frames():
    for trial in range(20):
        flips = list(rng.integers(0, 65, size=int(rng.integers(3, 50))))
        seg = segment(hashes_with_flip_counts(flips, seed=trial))
        assert seg.intervals[0][0] == 0
        assert seg.intervals[-1][1] == seg.n_frames
        for (a, b), (c, d) in zip(seg.intervals, seg.intervals[1:]):
            assert b == c and a < b


def test_segment_deterministic():
    flips = list(rng.integers(0, 65, size=40))
    h = hashes_with_flip_counts(flips, seed=11)
    assert segment(h).intervals == segment(h).intervals


# ---------------------------------------------------- refine_short_scenes

def one_hot_embeddings(intervals, directions, n_frames, dim):
    matrix = np.zeros((n_frames, dim))
    for (start, end), direction in zip(intervals, directions):
        matrix[start:end, direction] = 1.0
    return FrameEmbeddings(matrix)


def test_refine_keeps_long_scenes():
    seg = SceneSegmentation([(0, 200), (200, 400), (400, 600)], 600)
    emb = one_hot_embeddings(seg.intervals, [0, 1, 2], 600, 3)
    assert refine_short_scenes(seg, emb).intervals == seg.intervals


def test_refine_merges_into_cosine_nearer_neighbor():
    # middle scene's mean equals scene 1's and is orthogonal to scene 3's
    seg = SceneSegmentation([(0, 200), (200, 300), (300, 500)], 500)
    emb = one_hot_embeddings(seg.intervals, [0, 0, 1], 500, 2)
    assert refine_short_scenes(seg, emb).intervals == [(0, 300), (300, 500)]


def test_refine_first_scene_merges_into_only_neighbor():
    seg = SceneSegmentation([(0, 50), (50, 400)], 400)
    emb = one_hot_embeddings(seg.intervals, [0, 1], 400, 2)
    assert refine_short_scenes(seg, emb).intervals == [(0, 400)]


def test_refine_short_video_collapses_to_one_scene():
    seg = SceneSegmentation([(0, 40), (40, 100)], 100)
    emb = FrameEmbeddings(rng.normal(size=(100, 4)))
    assert refine_short_scenes(seg, emb).intervals == [(0, 100)]


def test_refine_rejects_coverage_mismatch():
    seg = SceneSegmentation([(0, 200)], 200)
    with pytest.raises(InvalidInput):
        refine_short_scenes(seg, FrameEmbeddings(np.ones((199, 4))))


def planted_instance(seed):
    """Random segmentation with isolated short scenes whose embeddings point
    exactly at a designated neighbor; returns (seg, emb, expected)."""
    local = np.random.default_rng(seed)
    lengths, targets = [], {}
    n_scenes = int(local.integers(3, 8))
    for i in range(n_scenes):
        lengths.append(int(local.integers(150, 400)))
    # plant shorts at non-adjacent odd positions
    for i in range(1, n_scenes, 2):
        if local.random() < 0.8:
            lengths[i] = int(local.integers(10, 149))
            if i == n_scenes - 1 or local.random() < 0.5:
                targets[i] = i - 1
            else:
                targets[i] = i + 1
    intervals, cursor = [], 0
    for length in lengths:
        intervals.append((cursor, cursor + length))
        cursor += length
    seg = SceneSegmentation(intervals, cursor)
    directions = list(range(n_scenes))
    for short, target in targets.items():
        directions[short] = directions[target]
    emb = one_hot_embeddings(intervals, directions, cursor, n_scenes)
    expected, skip = [], set()
    i = 0
    merged: list[tuple[int, int]] = []
    for i in range(n_scenes):
        if i in targets and targets[i] == i - 1:
            merged[-1] = (merged[-1][0], intervals[i][1])
        elif i in targets and targets[i] == i + 1:
            skip.add(i)
        elif (i - 1) in skip and targets.get(i - 1) == i:
            merged.append((intervals[i - 1][0], intervals[i][1]))
        else:
            merged.append(intervals[i])
    return seg, emb, merged


def test_refine_planted_short_scenes_oracle():
    for trial in range(50):
        seg, emb, expected = planted_instance(trial)
        result = refine_short_scenes(seg, emb)
        assert result.intervals == expected, f"trial {trial}"
        assert all(e - s >= 150 for s, e in result.intervals)


def test_refine_never_leaves_residual_short_scene():
    for trial in range(30):
        local = np.random.default_rng(1000 + trial)
        lengths = [int(local.integers(5, 400)) for _ in range(local.integers(2, 12))]
        intervals, cursor = [], 0
        for length in lengths:
            intervals.append((cursor, cursor + length))
            cursor += length
        seg = SceneSegmentation(intervals, cursor)
        emb = FrameEmbeddings(local.normal(size=(cursor, 6)))
        result = refine_short_scenes(seg, emb)
        if cursor >= 150:
            assert all(e - s >= 150 for s, e in result.intervals)
        else:
            assert result.intervals == [(0, cursor)]
