class ExtractionError(Exception):
    """Video decode, model load, or caption generation failed."""
