"""Language-model backend contract shared by the mock and remote clients."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Protocol


class Role(str, Enum):
    SMALL = "small"
    LARGE = "large"


class BackendError(Exception):
    """Base class; ``retriable`` tells callers whether a retry may help."""

    retriable = False


class RetriableBackendError(BackendError):
    retriable = True


class ProviderError(BackendError):
    """The provider answered with an error payload."""


class ScriptNotFoundError(BackendError, LookupError):
    """A strict scripted backend received a request it has no reply for."""


@dataclass(frozen=True)
class CompletionRequest:
    system: str
    user: str
    model: str = ""
    max_tokens: int = 1024
    temperature: float = 0.0
    # not sent on the wire; lets scripted backends match on intent
    metadata: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)
    prefix_state: Any = field(default=None, compare=False, hash=False)

    @property
    def task(self) -> str | None:
        return self.metadata.get("task")


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int
    role: Role

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class Completion:
    text: str
    usage: TokenUsage


class LanguageBackend(Protocol):
    role: Role

    def complete(self, request: CompletionRequest) -> Completion: ...

    def prefix_handle(self, fingerprint: str) -> Any:
        """Opaque provider-side state for a reusable prompt prefix."""
        ...
