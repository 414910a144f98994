"""Model-backend contracts: chat, vision, and embedding clients.

Live backends speak the common chat-completion HTTP protocol (messages
array in, choice text out). Scripted backends replay canned responses
deterministically and exist so the whole engine is testable offline.
Every request/response pair is appended to a CallLog for later assertion
and run-directory persistence.
"""
from __future__ import annotations

import base64
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path
from typing import Optional, Sequence

import requests

from .errors import (
    AuthError,
    BackendUnavailable,
    FrameNotFound,
    MalformedResponseError,
    MissingBinding,
    TransportError,
)


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.7
    max_tokens: int = 1024
    model_id: str = ""
    attachments: tuple[str, ...] = ()  # frame refs for image-capable chat

    def __post_init__(self):
        if not self.messages:
            raise ValueError("chat request needs at least one message")

    def text(self) -> str:
        """All message content concatenated; used for call-log scans."""
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class VisionRequest:
    frame_refs: tuple[str, ...]
    prompt: str
    model_id: str = ""

    def __post_init__(self):
        if not self.frame_refs:
            raise ValueError("vision request needs at least one frame")


@dataclass(frozen=True)
class EmbeddingRequest:
    tokens_or_text: str
    model_id: str = ""

    def __post_init__(self):
        if not self.tokens_or_text:
            raise ValueError("embedding request needs nonempty input")


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = ""
    api_key_env_var: str = "DIALOGUECRAFT_API_KEY"
    model_id: str = ""
    timeout_s: float = 60.0
    max_retries: int = 2
    retry_backoff_s: float = 1.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


# -- prompt templating -------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_placeholders: frozenset[str] = frozenset()

    def __post_init__(self):
        found = set(_PLACEHOLDER.findall(self.body))
        missing = self.required_placeholders - found
        if missing:
            raise ValueError(
                f"template {self.template_id!r} lacks required placeholders: {sorted(missing)}"
            )


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Single-pass substitution; braces inside bound values pass through."""

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise MissingBinding(name)
        return bindings[name]

    return _PLACEHOLDER.sub(substitute, template.body)


# -- call log ----------------------------------------------------------------

class CallLog:
    """Append-only record of every backend exchange, safe for concurrent use."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: list[dict] = []

    def record(self, kind: str, request: dict, response: Optional[str],
               error: Optional[str] = None) -> None:
        with self._lock:
            self._entries.append(
                {"kind": kind, "request": request, "response": response, "error": error}
            )

    @property
    def entries(self) -> list[dict]:
        with self._lock:
            return list(self._entries)

    def dump_jsonl(self, path: Path) -> None:
        with path.open("w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _chat_request_dict(request: ChatRequest) -> dict:
    return {
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "model_id": request.model_id,
        "attachments": list(request.attachments),
    }


# -- chat backends -----------------------------------------------------------

class ChatBackend:
    """Base chat client: retry-with-backoff around a single _send attempt."""

    supports_images = False

    def __init__(self, config: BackendConfig, call_log: Optional[CallLog] = None):
        self.config = config
        self.call_log = call_log or CallLog()

    def chat(self, request: ChatRequest) -> str:
        attempts = self.config.max_retries + 1
        last_error: Optional[TransportError] = None
        for attempt in range(attempts):
            try:
                response = self._send(request)
            except TransportError as exc:
                last_error = exc
                if attempt + 1 < attempts and self.config.retry_backoff_s > 0:
                    time.sleep(self.config.retry_backoff_s * 2**attempt)
                continue
            except AuthError:
                self.call_log.record("chat", _chat_request_dict(request), None, "auth")
                raise
            self.call_log.record("chat", _chat_request_dict(request), response)
            return response
        self.call_log.record("chat", _chat_request_dict(request), None, str(last_error))
        raise last_error or TransportError("no attempt made")

    def _send(self, request: ChatRequest) -> str:
        raise NotImplementedError


class HttpChatBackend(ChatBackend):
    """Client for a hosted chat-completion endpoint.

    The API key is read from the environment variable named in the config
    at call time; it never lives in config files.
    """

    supports_images = True

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env_var, "").strip()
        if not key:
            raise AuthError(f"environment variable {self.config.api_key_env_var} is not set")
        return key

    def _payload(self, request: ChatRequest) -> dict:
        messages: list[dict] = []
        for m in request.messages:
            messages.append({"role": m.role, "content": m.content})
        if request.attachments:
            parts: list[dict] = [{"type": "text", "text": messages[-1]["content"]}]
            for ref in request.attachments:
                parts.append({"type": "image_url", "image_url": {"url": _frame_data_url(ref)}})
            messages[-1] = {"role": messages[-1]["role"], "content": parts}
        return {
            "model": request.model_id or self.config.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def _send(self, request: ChatRequest) -> str:
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        try:
            resp = requests.post(
                self.config.endpoint_url,
                json=self._payload(request),
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected response shape: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponseError("response content is not text")
        return text


def _frame_data_url(ref: str) -> str:
    path = Path(ref)
    if not path.is_file():
        raise FrameNotFound(ref)
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:image/jpeg;base64,{data}"


class TransientFailure:
    """Queue marker for a scripted backend: raise TransportError once."""

    def __init__(self, message: str = "scripted transient failure"):
        self.message = message


class ScriptedChatBackend(ChatBackend):
    """Replays a fixed response queue; identical runs yield identical output."""

    supports_images = True

    def __init__(self, responses: Sequence, call_log: Optional[CallLog] = None,
                 config: Optional[BackendConfig] = None):
        super().__init__(config or BackendConfig(retry_backoff_s=0.0), call_log)
        self._lock = threading.Lock()
        self._queue = list(responses)

    def _send(self, request: ChatRequest) -> str:
        with self._lock:
            if not self._queue:
                raise MalformedResponseError("scripted chat queue exhausted")
            item = self._queue.pop(0)
        if isinstance(item, TransientFailure):
            raise TransportError(item.message)
        if isinstance(item, Exception):
            raise item
        return str(item)


# -- vision backends ---------------------------------------------------------

class VisionBackend:
    def __init__(self, config: BackendConfig, call_log: Optional[CallLog] = None):
        self.config = config
        self.call_log = call_log or CallLog()

    def perceive(self, request: VisionRequest) -> str:
        response = self._describe(request)
        self.call_log.record(
            "vision",
            {"frame_refs": list(request.frame_refs), "prompt": request.prompt},
            response,
        )
        return response

    def _describe(self, request: VisionRequest) -> str:
        raise NotImplementedError


class HttpVisionBackend(VisionBackend):
    """Vision queries over the same chat-completion protocol, frames attached."""

    def __init__(self, config: BackendConfig, call_log: Optional[CallLog] = None):
        super().__init__(config, call_log)
        self._chat = HttpChatBackend(config, CallLog())  # logged as vision, not chat

    def _describe(self, request: VisionRequest) -> str:
        for ref in request.frame_refs:
            if not Path(ref).is_file():
                raise FrameNotFound(ref)
        chat_request = ChatRequest(
            messages=(ChatMessage("user", request.prompt),),
            temperature=0.0,
            model_id=request.model_id or self.config.model_id,
            attachments=request.frame_refs,
        )
        return self._chat.chat(chat_request)


class ScriptedVisionBackend(VisionBackend):
    """Scripted descriptions keyed by (frame ref, prompt kind), with a queue fallback.

    A keyed entry matches when its frame appears in the request and its kind
    token occurs in the prompt (case-insensitive), so behavior- and
    emotion-granularity prompts over the same frames resolve independently.
    """

    def __init__(self, keyed: Optional[dict[tuple[str, str], str]] = None,
                 queue: Optional[Sequence[str]] = None,
                 call_log: Optional[CallLog] = None,
                 config: Optional[BackendConfig] = None):
        super().__init__(config or BackendConfig(retry_backoff_s=0.0), call_log)
        self._keyed = dict(keyed or {})
        self._lock = threading.Lock()
        self._queue = list(queue or [])

    def _describe(self, request: VisionRequest) -> str:
        prompt = request.prompt.lower()
        for (frame, kind), text in self._keyed.items():
            if frame in request.frame_refs and kind.lower() in prompt:
                return text
        with self._lock:
            if self._queue:
                return self._queue.pop(0)
        raise MalformedResponseError(
            f"no scripted vision response for frames {list(request.frame_refs)!r}"
        )


# -- embedding backends ------------------------------------------------------

class EmbeddingBackend:
    def __init__(self, call_log: Optional[CallLog] = None):
        self.call_log = call_log or CallLog()

    def embed(self, request: EmbeddingRequest) -> list[list[float]]:
        vectors = self._embed(request)
        self.call_log.record(
            "embedding", {"text": request.tokens_or_text}, f"{len(vectors)} vectors"
        )
        return vectors

    def _embed(self, request: EmbeddingRequest) -> list[list[float]]:
        raise NotImplementedError


class ScriptedEmbeddingBackend(EmbeddingBackend):
    """Deterministic per-token unit vectors, optionally overridden per token."""

    def __init__(self, dim: int = 16, vectors: Optional[dict[str, list[float]]] = None,
                 call_log: Optional[CallLog] = None):
        super().__init__(call_log)
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self._vectors = dict(vectors or {})

    def _token_vector(self, token: str) -> list[float]:
        if token in self._vectors:
            return list(self._vectors[token])
        digest = sha256(token.encode("utf-8")).digest()
        raw = [digest[i % len(digest)] - 127.5 for i in range(self.dim)]
        norm = sum(v * v for v in raw) ** 0.5
        return [v / norm for v in raw]

    def _embed(self, request: EmbeddingRequest) -> list[list[float]]:
        tokens = request.tokens_or_text.split()
        return [self._token_vector(t) for t in tokens]


def require_embedding_backend(backend: Optional[EmbeddingBackend]) -> EmbeddingBackend:
    if backend is None:
        raise BackendUnavailable("no embedding backend configured")
    return backend
