"""Training-free video summarization pipeline.

Stages: perceptual-hash scene division with an adaptive threshold,
embedding-based refinement of short scenes, batched scene captioning,
rubric-guided LLM scene scoring (boundary/contextual prompts), frame-level
normalization + cosine smoothing + consistency/uniqueness weighting, keyshot
selection under a duration budget, and keyshot F1 evaluation.
"""

__version__ = "0.1.0"

from .errors import (
    BackendError,
    CaptionError,
    ConfigError,
    FormatError,
    InvalidInput,
    InvalidRubric,
    MalformedReason,
    MalformedScore,
    ManifestError,
    ScoringError,
    StageError,
    StageMissing,
    VsumError,
)

__all__ = [
    "BackendError",
    "CaptionError",
    "ConfigError",
    "FormatError",
    "InvalidInput",
    "InvalidRubric",
    "MalformedReason",
    "MalformedScore",
    "ManifestError",
    "ScoringError",
    "StageError",
    "StageMissing",
    "VsumError",
    "__version__",
]
