"""Caption and LLM backends: seeded offline mocks and JSON-over-HTTP clients,
plus the on-disk response cache.

Mock backends are pure functions of (inputs, seed) so full pipeline runs are
reproducible without network access. HTTP backends speak a minimal JSON
protocol: captions POST {"frames": [base64 jpeg, ...], "prompt": ...} and
scoring POSTs {"model": ..., "temperature": ..., "prompt": ...}; both expect
{"text": ...} back.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import tempfile
import threading
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BackendError
from .pseudo_label import REASON_KEYS, Rubric
from .scoring import (
    NOVELTY_DUPLICATED,
    NOVELTY_MIXED,
    NOVELTY_NEW,
    MockSceneFeatures,
    mock_rubric_score,
)

HTTP_TIMEOUT_S = 60.0

_REASON_MARKER = "STRICT JSON"
_SCORE_MARKER = "Output EXACTLY ONE integer"
_CONTEXT_MARKER = "context adjustment"
_PREFERENCE_MARKER = "USER PREFERENCE:"


def stable_u64(*parts) -> int:
    """Deterministic 64-bit seed from string parts (unlike hash())."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


class MockCaptionClient:
    """Seeded offline captioner: emits begin/end phrasing so batch
    normalization has something to rewrite; never fails."""

    backend_id = "mock"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def caption(
        self,
        frame_indices: Sequence[int],
        prompt: str,
        images: Sequence[np.ndarray] | None = None,
    ) -> str:
        key = stable_u64(self.seed, prompt, ",".join(map(str, frame_indices)))
        motif = f"{key:016x}"
        first, last = frame_indices[0], frame_indices[-1]
        return (
            f"The video begins with motif {motif[:8]} across frames "
            f"{first}-{last} showing activity {motif[8:12]}. "
            f"The video ends on cue {motif[12:16]}."
        )


class HttpCaptionClient:
    """JSON-over-HTTP captioner; frames are sent as base64 JPEGs."""

    backend_id = "http"

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = HTTP_TIMEOUT_S):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def caption(
        self,
        frame_indices: Sequence[int],
        prompt: str,
        images: Sequence[np.ndarray] | None = None,
    ) -> str:
        if images is None:
            raise BackendError("http caption backend needs decoded frame images")
        payload = {"frames": [_jpeg_b64(img) for img in images], "prompt": prompt}
        return _post_json(self.endpoint, payload, self.api_key, self.timeout)


class MockLLMClient:
    """Seeded offline scorer/miner.

    Scoring prompts get a single integer derived from pseudo-random scene
    features pushed through the rubric arithmetic; reason-mining prompts get
    a strict-JSON triple; anything else gets a short synthesized rubric note.
    Deterministic per (prompt, seed).
    """

    backend_id = "mock"

    def __init__(self, seed: int = 0, rubric: Rubric | None = None):
        self.seed = seed
        self.rubric = rubric

    def send(self, prompt: str, model_id: str, temperature: float) -> str:
        if _REASON_MARKER in prompt and all(k in prompt for k in REASON_KEYS):
            return self._reason_response(prompt)
        if _SCORE_MARKER in prompt:
            return str(self._score_response(prompt))
        return self._rubric_response(prompt)

    def _rng(self, prompt: str) -> np.random.Generator:
        return np.random.default_rng(stable_u64(self.seed, prompt))

    def _score_response(self, prompt: str) -> int:
        rubric = self.rubric
        if rubric is None:
            from .pseudo_label import builtin_rubric

            rubric = builtin_rubric("tvsum")
        rng = self._rng(prompt)
        dims = rng.integers(0, 101, size=len(rubric.dimensions))
        triggers = tuple(
            p.name for p in rubric.penalties if rng.random() < 0.12
        )
        novelty = [NOVELTY_NEW, NOVELTY_DUPLICATED, NOVELTY_MIXED][int(rng.integers(3))]
        bound = rubric.preference_adjustment_bound
        pref = (
            int(rng.integers(-bound, bound + 1))
            if _PREFERENCE_MARKER in prompt
            else 0
        )
        features = MockSceneFeatures(
            dimensions=[float(d) for d in dims],
            penalty_triggers=triggers,
            novelty=novelty,
            preference_match=pref,
        )
        return mock_rubric_score(features, rubric, _CONTEXT_MARKER in prompt)

    def _reason_response(self, prompt: str) -> str:
        tag = f"{stable_u64(self.seed, prompt):016x}"
        return json.dumps(
            {
                "reason_positive": f"high segments show the decisive action ({tag[:6]})",
                "reason_negative": f"low segments are static filler ({tag[6:12]})",
                "reason_difference": "key segments advance the event; filler repeats it",
            }
        )

    def _rubric_response(self, prompt: str) -> str:
        tag = f"{stable_u64(self.seed, prompt):016x}"
        return (
            f"Synthesized rubric draft {tag[:8]}: weight decisive action, "
            "penalize static filler, output exactly one integer in [0,100]."
        )


class HttpLLMClient:
    """JSON-over-HTTP scorer."""

    backend_id = "http"

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = HTTP_TIMEOUT_S):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def send(self, prompt: str, model_id: str, temperature: float) -> str:
        payload = {"model": model_id, "temperature": temperature, "prompt": prompt}
        return _post_json(self.endpoint, payload, self.api_key, self.timeout)


def _jpeg_b64(image: np.ndarray) -> str:
    from PIL import Image

    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(arr, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="JPEG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _post_json(endpoint: str, payload: dict, api_key: str | None, timeout: float) -> str:
    import requests

    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        response = requests.post(endpoint, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise BackendError(f"request to {endpoint} failed: {exc}") from exc
    if response.status_code != 200:
        raise BackendError(
            f"{endpoint} returned HTTP {response.status_code}: {response.text[:200]}"
        )
    try:
        text = response.json()["text"]
    except (ValueError, KeyError) as exc:
        raise BackendError(f"{endpoint} returned malformed JSON: {exc}") from exc
    if not isinstance(text, str):
        raise BackendError(f"{endpoint} returned non-string text field")
    return text


class ResponseCache:
    """Disk cache for captions and scene scores.

    Captions are keyed by (video id, scene interval, kind, backend id) and
    scores by (prompt hash, model id). Writes go through a temp file + rename
    so concurrent readers never observe partial files.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "captions").mkdir(parents=True, exist_ok=True)
        (self.root / "scores").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _caption_path(self, video_id: str, interval: tuple[int, int], kind: str, backend_id: str) -> Path:
        key = f"{video_id}|{interval[0]}|{interval[1]}|{kind}|{backend_id}"
        return self.root / "captions" / f"{hashlib.sha256(key.encode()).hexdigest()}.json"

    def _score_path(self, prompt: str, model_id: str) -> Path:
        key = f"{hashlib.sha256(prompt.encode()).hexdigest()}|{model_id}"
        return self.root / "scores" / f"{hashlib.sha256(key.encode()).hexdigest()}.json"

    @staticmethod
    def _read(path: Path, field: str):
        if not path.is_file():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))[field]
        except (OSError, ValueError, KeyError):
            return None

    def _write(self, path: Path, doc: dict):
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with open(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, sort_keys=True)
            Path(tmp).replace(path)

    def get_caption(self, video_id: str, interval: tuple[int, int], kind: str, backend_id: str) -> str | None:
        return self._read(self._caption_path(video_id, interval, kind, backend_id), "text")

    def put_caption(self, video_id: str, interval: tuple[int, int], kind: str, backend_id: str, text: str):
        self._write(
            self._caption_path(video_id, interval, kind, backend_id),
            {"video_id": video_id, "interval": list(interval), "kind": kind,
             "backend_id": backend_id, "text": text},
        )

    def get_score(self, prompt: str, model_id: str) -> int | None:
        value = self._read(self._score_path(prompt, model_id), "value")
        return int(value) if value is not None else None

    def put_score(self, prompt: str, model_id: str, value: int):
        self._write(
            self._score_path(prompt, model_id),
            {"model_id": model_id, "value": int(value),
             "prompt_sha256": hashlib.sha256(prompt.encode()).hexdigest()},
        )
