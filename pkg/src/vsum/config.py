"""Run configuration: backend selection, rubric, normalization, budget,
threshold grid, schedule overrides, seed, concurrency, caching.

Loaded from a JSON file with environment-variable fallbacks for endpoints
and keys (VSUM_LLM_ENDPOINT, VSUM_LLM_API_KEY, VSUM_CAPTION_ENDPOINT,
VSUM_CAPTION_API_KEY, VSUM_CACHE_DIR).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

ENV_LLM_ENDPOINT = "VSUM_LLM_ENDPOINT"
ENV_LLM_API_KEY = "VSUM_LLM_API_KEY"
ENV_CAPTION_ENDPOINT = "VSUM_CAPTION_ENDPOINT"
ENV_CAPTION_API_KEY = "VSUM_CAPTION_API_KEY"
ENV_CACHE_DIR = "VSUM_CACHE_DIR"

BACKEND_MOCK = "mock"
BACKEND_HTTP = "http"


@dataclass
class RunConfig:
    caption_backend: str = BACKEND_MOCK
    llm_backend: str = BACKEND_MOCK
    rubric: str = "tvsum"              # built-in tag or path to a .rubric file
    normalization: str = "minmax"
    exp_alpha: float = 1.0
    budget_fraction: float | None = 0.15
    budget_absolute: int | None = None
    tau_min: float = 0.05
    tau_max: float = 0.60
    delta_tau: float = 0.05
    min_scene_len: int = 150
    short_threshold_seconds: float = 100.0
    schedule_sigma: float | None = None       # override the length-based rule
    schedule_window_seconds: float | None = None
    seed: int = 0
    concurrency: int = 4
    batch_size: int = 60
    retries: int = 3
    model_id: str = "default"
    temperature: float = 0.0
    use_context: bool = True
    enable_pseudo_label: bool = False
    enable_refine: bool = True
    cache_dir: str | None = None
    llm_endpoint: str | None = None
    llm_api_key: str | None = None
    caption_endpoint: str | None = None
    caption_api_key: str | None = None

    def __post_init__(self):
        if self.caption_backend not in (BACKEND_MOCK, BACKEND_HTTP):
            raise ConfigError(f"unknown caption backend '{self.caption_backend}'")
        if self.llm_backend not in (BACKEND_MOCK, BACKEND_HTTP):
            raise ConfigError(f"unknown llm backend '{self.llm_backend}'")
        if self.normalization not in ("minmax", "exponential"):
            raise ConfigError(f"unknown normalization '{self.normalization}'")
        if self.budget_fraction is not None and self.budget_absolute is not None:
            raise ConfigError("set only one of budget_fraction / budget_absolute")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.retries < 1:
            raise ConfigError("retries must be >= 1")
        self.cache_dir = self.cache_dir or os.environ.get(ENV_CACHE_DIR)
        self.llm_endpoint = self.llm_endpoint or os.environ.get(ENV_LLM_ENDPOINT)
        self.llm_api_key = self.llm_api_key or os.environ.get(ENV_LLM_API_KEY)
        self.caption_endpoint = self.caption_endpoint or os.environ.get(
            ENV_CAPTION_ENDPOINT
        )
        self.caption_api_key = self.caption_api_key or os.environ.get(
            ENV_CAPTION_API_KEY
        )
        if self.rubric not in ("tvsum", "summe", "qfvs") and not Path(self.rubric).is_file():
            raise ConfigError(
                f"rubric '{self.rubric}' is neither a built-in tag nor an existing file"
            )
        if self.caption_backend == BACKEND_HTTP and not self.caption_endpoint:
            raise ConfigError(
                f"caption backend is http but no endpoint configured "
                f"(set {ENV_CAPTION_ENDPOINT} or caption_endpoint)"
            )
        if self.llm_backend == BACKEND_HTTP and not self.llm_endpoint:
            raise ConfigError(
                f"llm backend is http but no endpoint configured "
                f"(set {ENV_LLM_ENDPOINT} or llm_endpoint)"
            )

    def snapshot(self) -> dict:
        """JSON-ready copy with secrets redacted."""
        doc = dataclasses.asdict(self)
        for key in ("llm_api_key", "caption_api_key"):
            if doc.get(key):
                doc[key] = "***"
        return doc


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Load configuration from a JSON file (optional) with keyword overrides
    (CLI flags) applied on top."""
    doc: dict = {}
    if path is not None:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config '{path}': {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config '{path}' is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    supplied = {k: v for k, v in overrides.items() if v is not None}
    # the two budget forms are mutually exclusive; overriding one clears the other
    if "budget_fraction" in supplied:
        doc["budget_absolute"] = None
    if "budget_absolute" in supplied:
        doc["budget_fraction"] = None
    doc.update(supplied)
    try:
        return RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
