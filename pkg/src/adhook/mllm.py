"""Methodology-insight extraction through a pluggable multimodal backend.

The prompt template is a versioned package resource rendered with the
ad's title and body texts. Requests carry the rendered prompt plus the
sampled frames as base64 PNGs. A deterministic mock backend (fixture
corpus keyed by a content hash of prompt and frame digests) makes the
whole stage reproducible without model access; an HTTP backend covers
live use. Responses are parsed by locating the first balanced JSON
object in the text.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import requests
from PIL import Image

from .ingest import AudioClip, Frame

PROMPT_TEMPLATE_ID = "methodology_v1"
_PLACEHOLDERS = {"{ad title text}": "title", "{ad body text}": "body"}

MOCK_FALLBACK_RESPONSE = '{"methodology":"unknown","rationale":"no fixture"}'


class MllmError(Exception):
    """Base class for backend and parsing failures."""


class NoJsonFound(MllmError):
    pass


class MissingKey(MllmError):
    def __init__(self, name: str):
        super().__init__(f"response JSON lacks required key {name!r}")
        self.name = name


class NonStringValue(MllmError):
    def __init__(self, name: str):
        super().__init__(f"response JSON key {name!r} is not a string")
        self.name = name


class BackendUnavailable(MllmError):
    pass


class Timeout(MllmError):
    pass


class AuthFailure(MllmError):
    pass


class ProviderUnavailable(MllmError):
    pass


class BackendKind(str, Enum):
    HTTP_ENDPOINT = "HttpEndpoint"
    DETERMINISTIC_MOCK = "DeterministicMock"


@dataclass(frozen=True)
class BackendConfig:
    """Where insight queries go and how failures are retried."""

    kind: BackendKind = BackendKind.DETERMINISTIC_MOCK
    endpoint: str = ""
    api_key_env: str = "ADHOOK_MLLM_API_KEY"
    corpus_path: Optional[str] = None
    max_retries: int = 2
    timeout_s: float = 10.0
    backoff_base_s: float = 0.5

    @property
    def backend_id(self) -> str:
        if self.kind is BackendKind.DETERMINISTIC_MOCK:
            return f"mock:{Path(self.corpus_path).name if self.corpus_path else 'fallback'}"
        return f"http:{self.endpoint}"


@dataclass(frozen=True)
class AsrConfig:
    """Transcript provider; the mock kind reads a fixture corpus keyed by
    a content hash of the audio."""

    kind: str = "Disabled"  # Disabled | DeterministicMock
    corpus_path: Optional[str] = None


@dataclass(frozen=True)
class PromptSpec:
    template_id: str
    title_text: str
    body_text: str
    rendered: str


@dataclass
class MethodologyInsight:
    """Parsed backend verdict: the engagement methodology and its rationale."""

    asset_id: str
    methodology: str
    rationale: str
    raw_response: str
    backend_id: str
    attempt_count: int = 1

    def __post_init__(self):
        if not self.methodology:
            raise ValueError("methodology must be non-empty")
        if not self.rationale:
            raise ValueError("rationale must be non-empty")
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be positive")

    def to_json(self) -> str:
        return json.dumps(
            {
                "asset_id": self.asset_id,
                "methodology": self.methodology,
                "rationale": self.rationale,
                "raw_response": self.raw_response,
                "backend_id": self.backend_id,
                "attempt_count": self.attempt_count,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, raw: str) -> "MethodologyInsight":
        payload = json.loads(raw)
        return cls(**payload)


def _load_template(template_id: str) -> str:
    text = resources.files("adhook.templates").joinpath(f"{template_id}.txt").read_text("utf-8")
    return text.rstrip("\n")


def _render(template: str, title: str, body: str) -> str:
    """Substitute the named placeholders and unescape doubled braces.

    A hand-rolled scan instead of str.format so that brace characters in
    the user-supplied texts survive untouched.
    """
    out: list[str] = []
    i = 0
    while i < len(template):
        ch = template[i]
        if template.startswith("{{", i):
            out.append("{")
            i += 2
            continue
        if template.startswith("}}", i):
            out.append("}")
            i += 2
            continue
        matched = False
        for placeholder, which in _PLACEHOLDERS.items():
            if template.startswith(placeholder, i):
                out.append(title if which == "title" else body)
                i += len(placeholder)
                matched = True
                break
        if matched:
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def build_prompt(title: str, body: str, template_id: str = PROMPT_TEMPLATE_ID) -> PromptSpec:
    """Render the versioned methodology prompt for one ad."""
    rendered = _render(_load_template(template_id), title, body)
    return PromptSpec(template_id=template_id, title_text=title, body_text=body, rendered=rendered)


def encode_frame_png(frame: Frame) -> bytes:
    raw = np.ascontiguousarray(frame.pixels).tobytes()
    image = Image.frombytes("RGB", (frame.width, frame.height), raw)
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def request_envelope(prompt: PromptSpec, png_images: list[bytes], asset_id: str) -> dict:
    """The wire format sent to any backend."""
    return {
        "prompt": prompt.rendered,
        "images": [base64.b64encode(png).decode("ascii") for png in png_images],
        "meta": {"asset_id": asset_id},
    }


def content_hash(prompt_rendered: str, frame_digests: list[bytes]) -> str:
    """Fixture key: digest of the prompt and the ordered frame digests."""
    h = hashlib.blake2b(digest_size=16)
    h.update(prompt_rendered.encode("utf-8"))
    for digest in frame_digests:
        h.update(b"\x00")
        h.update(digest)
    return h.hexdigest()


def _mock_response(cfg: BackendConfig, key: str) -> str:
    corpus: dict = {}
    if cfg.corpus_path:
        corpus = json.loads(Path(cfg.corpus_path).read_text(encoding="utf-8"))
    return corpus.get(key, MOCK_FALLBACK_RESPONSE)


def _http_once(cfg: BackendConfig, payload: dict) -> str:
    headers = {}
    api_key = os.environ.get(cfg.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    response = requests.post(cfg.endpoint, json=payload, timeout=cfg.timeout_s, headers=headers)
    if response.status_code in (401, 403):
        raise AuthFailure(f"backend returned {response.status_code}")
    if response.status_code >= 300:
        raise requests.ConnectionError(f"backend returned {response.status_code}")
    return response.text


def query_backend(
    cfg: BackendConfig,
    prompt: PromptSpec,
    frames: list[Frame],
    asset_id: str = "",
    transport: Optional[Callable[[dict], str]] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Submit one prompt-plus-frames request and return the raw response text.

    Transient HTTP failures are retried with exponential backoff up to
    max_retries extra attempts; auth rejections are raised immediately.

    Raises:
        BackendUnavailable: retries exhausted on connection errors.
        Timeout: retries exhausted and the last failure was a timeout.
        AuthFailure: credentials rejected.
    """
    if not frames:
        raise ValueError("at least one frame is required")
    if cfg.kind is BackendKind.DETERMINISTIC_MOCK:
        key = content_hash(prompt.rendered, [frame.digest() for frame in frames])
        return _mock_response(cfg, key)

    payload = request_envelope(prompt, [encode_frame_png(f) for f in frames], asset_id)
    send = transport if transport is not None else (lambda body: _http_once(cfg, body))
    last_exc: Optional[Exception] = None
    for attempt in range(cfg.max_retries + 1):
        if attempt > 0:
            sleep(cfg.backoff_base_s * 2 ** (attempt - 1))
        try:
            return send(payload)
        except AuthFailure:
            raise
        except requests.Timeout as exc:
            last_exc = exc
        except (requests.ConnectionError, requests.RequestException, OSError) as exc:
            last_exc = exc
    if isinstance(last_exc, requests.Timeout):
        raise Timeout(f"no response after {cfg.max_retries + 1} attempts") from last_exc
    raise BackendUnavailable(f"no response after {cfg.max_retries + 1} attempts") from last_exc


def _balanced_spans(raw: str):
    """Yield candidate {...} substrings in order of their opening brace."""
    for start in range(len(raw)):
        if raw[start] != "{":
            continue
        depth = 0
        in_string = False
        escaped = False
        for end in range(start, len(raw)):
            ch = raw[end]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield raw[start : end + 1]
                    break


def parse_insight(
    raw: str,
    asset_id: str,
    backend_id: str = "",
    attempt_count: int = 1,
) -> MethodologyInsight:
    """Extract the methodology/rationale object from a backend's response.

    Surrounding prose and code fences are tolerated; the first balanced
    JSON object found in the text is the candidate.

    Raises:
        NoJsonFound: nothing in the text parses as a JSON object.
        MissingKey / NonStringValue: the object violates the contract.
    """
    payload = None
    for span in _balanced_spans(raw):
        try:
            candidate = json.loads(span)
        except json.JSONDecodeError:
            continue
        if isinstance(candidate, dict):
            payload = candidate
            break
    if payload is None:
        raise NoJsonFound("no balanced JSON object in response")
    for key in ("methodology", "rationale"):
        if key not in payload:
            raise MissingKey(key)
        if not isinstance(payload[key], str):
            raise NonStringValue(key)
    return MethodologyInsight(
        asset_id=asset_id,
        methodology=payload["methodology"].strip(),
        rationale=payload["rationale"].strip(),
        raw_response=raw,
        backend_id=backend_id,
        attempt_count=attempt_count,
    )


def extract_insight(
    cfg: BackendConfig,
    prompt: PromptSpec,
    frames: list[Frame],
    asset_id: str,
    transport: Optional[Callable[[dict], str]] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> MethodologyInsight:
    """Query, parse, and on a parse failure re-query once before giving up."""
    raw = query_backend(cfg, prompt, frames, asset_id, transport=transport, sleep=sleep)
    try:
        return parse_insight(raw, asset_id, cfg.backend_id, attempt_count=1)
    except (NoJsonFound, MissingKey, NonStringValue, ValueError):
        raw = query_backend(cfg, prompt, frames, asset_id, transport=transport, sleep=sleep)
        return parse_insight(raw, asset_id, cfg.backend_id, attempt_count=2)


def audio_content_hash(clip: AudioClip) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(clip.sample_rate_hz).to_bytes(8, "little"))
    h.update(clip.samples.tobytes())
    return h.hexdigest()


def transcribe(clip: AudioClip, provider: AsrConfig) -> str:
    """Transcript for a clip; empty audio short-circuits to the empty string.

    Raises:
        ProviderUnavailable: the provider is not usable (for the mock,
            a missing fixture corpus).
    """
    if len(clip.samples) == 0:
        return ""
    if provider.kind == "Disabled":
        return ""
    if provider.kind == "DeterministicMock":
        if not provider.corpus_path or not Path(provider.corpus_path).is_file():
            raise ProviderUnavailable(f"no ASR fixture corpus at {provider.corpus_path!r}")
        corpus = json.loads(Path(provider.corpus_path).read_text(encoding="utf-8"))
        return corpus.get(audio_content_hash(clip), "")
    raise ProviderUnavailable(f"unknown ASR provider kind {provider.kind!r}")
