from epimem.backend.base import (
    BackendError,
    Completion,
    CompletionRequest,
    LanguageBackend,
    ProviderError,
    RetriableBackendError,
    Role,
    ScriptNotFoundError,
    TokenUsage,
)
from epimem.backend.cache import PrefixStateCache, fingerprint
from epimem.backend.mock import ExtractiveOracle, ScriptedBackend, ScriptRule
from epimem.backend.remote import ChatCompletionsBackend, RemoteEmbeddingProvider

__all__ = [
    "BackendError",
    "ChatCompletionsBackend",
    "Completion",
    "CompletionRequest",
    "ExtractiveOracle",
    "LanguageBackend",
    "PrefixStateCache",
    "ProviderError",
    "RemoteEmbeddingProvider",
    "RetriableBackendError",
    "Role",
    "ScriptNotFoundError",
    "ScriptRule",
    "ScriptedBackend",
    "TokenUsage",
    "fingerprint",
]
