"""Offline extraction adapter for the summarization pipeline.

Decodes a video, samples the middle frame of each second, computes per-frame
embeddings with a selectable backbone, generates batched scene captions, and
writes the pipeline's neutral formats: the VSEM1 embedding container, the
caption JSON schema, and a manifest fragment.
"""

__version__ = "0.1.0"

from .errors import ExtractionError

__all__ = ["ExtractionError", "__version__"]
