"""HTTP client for a chat-completion JSON API plus a record/replay cache."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

ENV_BASE_URL = "AD_LLM_BASE_URL"
ENV_API_KEY = "AD_LLM_API_KEY"
ENV_MODEL = "AD_LLM_MODEL"


class LlmError(RuntimeError):
    pass


class LlmHttpError(LlmError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class CacheMissError(LlmError):
    def __init__(self, key: str):
        super().__init__(f"replay cache miss for key {key}")
        self.key = key


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        for role, _content in self.messages:
            if role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown role {role!r}")
        object.__setattr__(self, "messages",
                           tuple((r, c) for r, c in self.messages))

    def to_wire(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


def request_key(request: CompletionRequest) -> str:
    """Cache key: sha256 of the canonicalized request (content bytes exact)."""
    canonical = json.dumps(request.to_wire(), sort_keys=True,
                           separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class LlmClient:
    """POSTs chat-completion requests; retries timeouts and 5xx with backoff."""

    def __init__(self, base_url: str | None = None, api_key: str | None = None,
                 model: str | None = None, timeout: float = 60.0,
                 max_retries: int = 2, backoff: float = 0.5, transport=None):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL, "default")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self):
        self._client.close()

    def complete(self, request: CompletionRequest) -> str:
        if not self.base_url:
            raise LlmError(f"no endpoint configured (set {ENV_BASE_URL})")
        url = self.base_url + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0 and self.backoff > 0:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=request.to_wire(), headers=headers)
            except httpx.TimeoutException as exc:
                last_exc = exc
                continue
            if 500 <= resp.status_code < 600:
                last_exc = LlmHttpError(resp.status_code, resp.text)
                continue
            if not (200 <= resp.status_code < 300):
                raise LlmHttpError(resp.status_code, resp.text)
            return self._extract(resp)
        if isinstance(last_exc, LlmError):
            raise last_exc
        raise LlmError(f"request failed after {self.max_retries + 1} attempts: {last_exc}")

    @staticmethod
    def _extract(resp: httpx.Response) -> str:
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmError(f"malformed completion response: {exc}") from exc
        if not isinstance(content, str):
            raise LlmError("completion content is not a string")
        return content


class ReplayCache:
    """Wraps a completer with a hash-keyed transcript cache.

    record mode: call the inner completer and persist (request, answer).
    replay mode: serve only from the cache; never touches the network.
    """

    def __init__(self, inner, directory, mode: str):
        if mode not in ("record", "replay"):
            raise ValueError(f"unknown cache mode {mode!r}")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs an inner completer")
        self.inner = inner
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.mode = mode

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def __call__(self, request: CompletionRequest) -> str:
        key = request_key(request)
        path = self._path(key)
        if self.mode == "replay":
            if not path.exists():
                raise CacheMissError(key)
            return json.loads(path.read_text(encoding="utf-8"))["answer"]
        answer = self.inner(request)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(
            {"key": key, "request": request.to_wire(), "answer": answer},
            indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)
        return answer

    def entries(self) -> list[dict]:
        out = []
        for p in sorted(self.directory.glob("*.json")):
            out.append(json.loads(p.read_text(encoding="utf-8")))
        return out
