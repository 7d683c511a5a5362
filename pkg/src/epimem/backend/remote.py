"""Chat-completions HTTP client.

Request (POST ``{base_url}/chat/completions``)::

    {"model": str,
     "messages": [{"role": "system", "content": str}, {"role": "user", "content": str}],
     "max_tokens": int, "temperature": float}

plus ``"prompt_cache_key": str`` when a prefix-state handle is attached and
``send_cache_key`` is on.  Response fields read: ``choices[0].message.content``
and ``usage.prompt_tokens`` / ``usage.completion_tokens``.

Transport errors, timeouts, HTTP 429 and 5xx are retried with exponential
backoff (3 attempts by default).  Other 4xx responses and bodies carrying an
``error`` object raise :class:`ProviderError` immediately.
"""

from __future__ import annotations

import logging
import os
import time
from typing import Any

import httpx

from epimem.backend.base import (
    BackendError,
    Completion,
    CompletionRequest,
    ProviderError,
    RetriableBackendError,
    Role,
    TokenUsage,
)

logger = logging.getLogger(__name__)

ENV_API_KEY = "EPIMEM_API_KEY"
ENV_BASE_URL = "EPIMEM_BASE_URL"
ENV_SMALL_MODEL = "EPIMEM_SMALL_MODEL"
ENV_LARGE_MODEL = "EPIMEM_LARGE_MODEL"
ENV_EMBED_MODEL = "EPIMEM_EMBED_MODEL"


def _provider_message(payload: Any, fallback: str) -> str:
    if isinstance(payload, dict):
        err = payload.get("error")
        if isinstance(err, dict) and err.get("message"):
            return str(err["message"])
        if isinstance(err, str):
            return err
    return fallback


class _HTTPBase:
    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        *,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        client: httpx.Client | None = None,
    ) -> None:
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL) or "http://localhost:8000/v1").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._client = client or httpx.Client(timeout=timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        url = f"{self.base_url}{path}"
        last: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._client.post(url, json=body, headers=self._headers())
            except httpx.TransportError as exc:
                last = exc
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = BackendError(f"HTTP {resp.status_code}")
                else:
                    try:
                        payload = resp.json()
                    except ValueError as exc:
                        raise ProviderError(f"non-JSON response (HTTP {resp.status_code})") from exc
                    if resp.status_code >= 400 or (isinstance(payload, dict) and "error" in payload):
                        raise ProviderError(_provider_message(payload, f"HTTP {resp.status_code}"))
                    return payload
            if attempt < self.max_attempts:
                delay = self.backoff_base * 2 ** (attempt - 1)
                logger.warning("request to %s failed (%s); retry %d in %.2fs", url, last, attempt, delay)
                time.sleep(delay)
        raise RetriableBackendError(f"{url} unreachable after {self.max_attempts} attempts: {last}")


class ChatCompletionsBackend(_HTTPBase):
    def __init__(
        self,
        model: str | None = None,
        role: Role = Role.SMALL,
        *,
        send_cache_key: bool = False,
        **kwargs: Any,
    ) -> None:
        super().__init__(**kwargs)
        env = ENV_SMALL_MODEL if role is Role.SMALL else ENV_LARGE_MODEL
        self.model = model or os.environ.get(env, "")
        self.role = role
        self.send_cache_key = send_cache_key

    def build_body(self, request: CompletionRequest) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": request.model or self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if self.send_cache_key and request.prefix_state is not None:
            body["prompt_cache_key"] = str(request.prefix_state)
        return body

    def complete(self, request: CompletionRequest) -> Completion:
        payload = self._post("/chat/completions", self.build_body(request))
        try:
            text = payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion payload: {exc!r}") from exc
        usage = payload.get("usage") or {}
        return Completion(
            text,
            TokenUsage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)), self.role),
        )

    def prefix_handle(self, fingerprint: str) -> Any:
        return fingerprint


class RemoteEmbeddingProvider(_HTTPBase):
    """POST ``{base_url}/embeddings`` with ``{"model", "input"}``; reads ``data[0].embedding``."""

    def __init__(self, model: str | None = None, dimension: int | None = None, **kwargs: Any) -> None:
        super().__init__(**kwargs)
        self.model = model or os.environ.get(ENV_EMBED_MODEL, "")
        self.dimension = dimension
        self.name = f"remote:{self.model}"

    def embed(self, text: str) -> list[float]:
        payload = self._post("/embeddings", {"model": self.model, "input": text})
        try:
            vec = [float(x) for x in payload["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed embedding payload: {exc!r}") from exc
        if self.dimension is None:
            self.dimension = len(vec)
        return vec
