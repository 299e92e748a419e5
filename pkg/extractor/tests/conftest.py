"""Pytest fixtures for the extractor suite."""

import pytest

from clip_util import write_test_clip


@pytest.fixture()
def test_clip(tmp_path):
    """Bundled 3-second test clip, generated deterministically."""
    return write_test_clip(tmp_path / "clip.avi")
