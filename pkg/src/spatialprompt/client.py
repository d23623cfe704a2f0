"""Chat dispatch behind a uniform backend interface.

Backends: an OpenAI-compatible HTTP endpoint, a deterministic replay file
(JSON-lines of fingerprint -> response), and an echo double for tests. The
request fingerprint is a sha256 over the canonical JSON of the parts with
image payloads content-hashed, so replay lookups survive map-ordering and
byte-identical images always collide.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import BackendUnavailable, ProviderError, ReplayMiss
from .prompting import PromptBundle

API_KEY_ENV = "SPATIAL_PROMPT_API_KEY"

IMAGE_LABEL = "Image data:"


@dataclass(frozen=True)
class ChatRequest:
    model_tag: str
    parts: tuple[dict, ...]
    temperature: float = 0.0
    max_output_tokens: int = 256


@dataclass(frozen=True)
class ChatResponse:
    answer_text: str
    latency_ms: int
    backend_tag: str
    raw_ref: object = None


def to_chat_request(
    bundle: PromptBundle,
    model_tag: str,
    temperature: float = 0.0,
    max_output_tokens: int = 256,
) -> ChatRequest:
    """Flatten a bundle into ordered text/image parts.

    Order: preamble, then per keyframe a pose text part followed by the image,
    then the annotation, then the query. Empty text components are elided.
    """
    parts: list[dict] = []

    def text(t: str):
        if t:
            parts.append({"type": "text", "text": t})

    text(bundle.preamble)
    for block in bundle.blocks:
        lines = [s for s in (block.position_text, block.rotation_text) if s]
        if lines:
            text("\n".join(lines + [IMAGE_LABEL]))
        parts.append(
            {
                "type": "image",
                "media_type": block.media_type,
                "data_b64": base64.b64encode(block.image_payload).decode("ascii"),
            }
        )
    text(bundle.annotation)
    text(bundle.query)
    return ChatRequest(
        model_tag=model_tag,
        parts=tuple(parts),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


def fingerprint(request: ChatRequest) -> str:
    """Stable content hash of the request parts (images hashed by payload)."""
    canonical = []
    for part in request.parts:
        if part["type"] == "image":
            digest = hashlib.sha256(base64.b64decode(part["data_b64"])).hexdigest()
            canonical.append({"type": "image", "media_type": part["media_type"], "sha256": digest})
        else:
            canonical.append({"type": "text", "text": part["text"]})
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class BackendConfig:
    kind: str = "http"              # http | replay | echo
    model: str = "gpt-4o-2024-11-20"
    base_url: str = "https://api.openai.com/v1"
    replay_file: str | None = None
    record: bool = False            # replay backend: append on miss via fallback
    retries: int = 3
    timeout_s: float = 60.0
    inflight: int = 4


class EchoBackend:
    """Test double: answers with the final text part (the user query)."""

    tag = "echo"

    def send(self, request: ChatRequest) -> ChatResponse:
        texts = [p["text"] for p in request.parts if p["type"] == "text"]
        answer = texts[-1] if texts else ""
        return ChatResponse(answer_text=answer, latency_ms=0, backend_tag=self.tag)


class ReplayBackend:
    """Deterministic playback of recorded fingerprint -> response pairs.

    In record mode, misses are forwarded to a fallback backend and the
    response is appended to the replay file (appends are serialized).
    """

    tag = "replay"

    def __init__(self, path, record: bool = False, fallback=None):
        self.path = Path(path)
        self.record = record
        self.fallback = fallback
        self._lock = threading.Lock()
        self._responses: dict[str, str] = {}
        if self.path.is_file():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                self._responses[row["fingerprint"]] = row["response"]

    def send(self, request: ChatRequest) -> ChatResponse:
        fp = fingerprint(request)
        with self._lock:
            hit = self._responses.get(fp)
        if hit is not None:
            return ChatResponse(answer_text=hit, latency_ms=0, backend_tag=self.tag)
        if not (self.record and self.fallback is not None):
            raise ReplayMiss(fp)
        response = self.fallback.send(request)
        row = json.dumps(
            {"fingerprint": fp, "response": response.answer_text, "model": request.model_tag},
            ensure_ascii=False,
        )
        with self._lock:
            self._responses[fp] = response.answer_text
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(row + "\n")
        return response


class HttpBackend:
    """OpenAI-compatible chat-completions endpoint.

    Credentials come only from the environment; auth failures are never
    retried, network failures and 5xx/429 retry with exponential backoff.
    """

    tag = "http"

    def __init__(self, config: BackendConfig, session=None):
        self.config = config
        self.session = session or requests.Session()
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise BackendUnavailable(
                f"no API key: set the {API_KEY_ENV} environment variable"
            )
        self._headers = {
            "Authorization": f"Bearer {key}",
            "Content-Type": "application/json",
        }

    def _wire_content(self, request: ChatRequest) -> list[dict]:
        content = []
        for part in request.parts:
            if part["type"] == "text":
                content.append({"type": "text", "text": part["text"]})
            else:
                uri = f"data:{part['media_type']};base64,{part['data_b64']}"
                content.append({"type": "image_url", "image_url": {"url": uri}})
        return content

    def send(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_tag,
            "messages": [{"role": "user", "content": self._wire_content(request)}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        attempts = 0
        started = time.monotonic()
        while True:
            try:
                resp = self.session.post(
                    url, json=payload, headers=self._headers, timeout=self.config.timeout_s
                )
            except requests.RequestException as e:
                if attempts >= self.config.retries:
                    raise BackendUnavailable(
                        f"{url} unreachable after {attempts} retries: {e}", retries=attempts
                    )
                time.sleep(min(2.0 ** attempts, 30.0))
                attempts += 1
                continue

            if resp.status_code in (401, 403):
                raise BackendUnavailable(
                    f"authentication rejected (HTTP {resp.status_code})", retries=attempts
                )
            if resp.status_code == 429 or resp.status_code >= 500:
                if attempts >= self.config.retries:
                    raise ProviderError(resp.status_code, resp.text[:200])
                time.sleep(min(2.0 ** attempts, 30.0))
                attempts += 1
                continue
            if resp.status_code != 200:
                raise ProviderError(resp.status_code, resp.text[:200])

            body = resp.json()
            try:
                answer = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise ProviderError(resp.status_code, f"unexpected body shape: {str(body)[:200]}")
            latency_ms = int((time.monotonic() - started) * 1000)
            return ChatResponse(
                answer_text=answer, latency_ms=latency_ms, backend_tag=self.tag, raw_ref=body,
            )


def make_backend(config: BackendConfig):
    if config.kind == "replay":
        if not config.replay_file:
            raise BackendUnavailable("replay backend needs a replay file path")
        return ReplayBackend(config.replay_file, record=False)
    if config.kind == "echo":
        base = EchoBackend()
    elif config.kind == "http":
        base = HttpBackend(config)
    else:
        raise ValueError(f"unknown backend kind {config.kind!r}")
    if config.record:
        if not config.replay_file:
            raise BackendUnavailable("record mode needs a replay file path")
        return ReplayBackend(config.replay_file, record=True, fallback=base)
    return base


def send(request: ChatRequest, backend) -> ChatResponse:
    """Dispatch a request; `backend` is anything with a send(request) method,
    or a BackendConfig to construct one."""
    if isinstance(backend, BackendConfig):
        backend = make_backend(backend)
    return backend.send(request)
