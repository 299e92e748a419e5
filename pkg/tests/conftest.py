"""Pytest fixtures shared across the suite."""

import pytest

from synthetic import write_manifest, write_video_assets


@pytest.fixture()
def tiny_manifest(tmp_path):
    """Three short multi-scene videos with frames + embeddings on disk."""
    videos = [
        write_video_assets(
            tmp_path, f"vid{i}",
            blocks=[(160, 10 * i + 1), (170, 10 * i + 2), (150, 10 * i + 3)],
            fps=30.0, seed=i,
        )
        for i in range(3)
    ]
    return write_manifest(tmp_path, videos)
