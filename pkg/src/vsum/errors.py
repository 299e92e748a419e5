"""Exception types shared across the pipeline."""


class VsumError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(VsumError, ValueError):
    """An operation was called with arguments violating its contract."""


class ManifestError(VsumError):
    """Dataset manifest failed to load or validate."""


class FormatError(VsumError):
    """A binary or structured artifact is malformed."""


class ConfigError(VsumError):
    """Run configuration is missing, inconsistent, or references absent paths."""


class InvalidRubric(VsumError):
    """Rubric document violates its structural invariants."""


class MalformedReason(VsumError):
    """Reason-mining response did not contain a valid three-key JSON object."""


class MalformedScore(VsumError):
    """Scoring response was not exactly one integer in [0, 100]."""


class BackendError(VsumError):
    """A remote caption/LLM backend failed (per attempt; retried by callers)."""


class CaptionError(VsumError):
    """Captioning a scene failed after retries."""

    def __init__(self, scene_index: int, message: str = ""):
        self.scene_index = scene_index
        super().__init__(f"captioning failed for scene {scene_index}: {message}")


class ScoringError(VsumError):
    """Scoring a scene failed after retries."""

    def __init__(self, scene_index: int, message: str = ""):
        self.scene_index = scene_index
        super().__init__(f"scoring failed for scene {scene_index}: {message}")


class StageError(VsumError):
    """A pipeline stage failed; message names the stage and artifact."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {message}")


class StageMissing(VsumError):
    """A requested artifact was not produced by the recorded run."""
