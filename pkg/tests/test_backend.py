from __future__ import annotations

import json
import threading
import time
from pathlib import Path

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epimem.backend.base import (
    CompletionRequest,
    ProviderError,
    RetriableBackendError,
    Role,
    ScriptNotFoundError,
    TokenUsage,
)
from epimem.backend.cache import PrefixStateCache, fingerprint
from epimem.backend.mock import ExtractiveOracle, ScriptedBackend, ScriptRule
from epimem.backend.remote import ChatCompletionsBackend, RemoteEmbeddingProvider

WIRE = json.loads((Path(__file__).parent / "data" / "chat_completion_wire.json").read_text(encoding="utf-8"))

MODE_A = (
    "<response_type>retrieval</response_type><relevant_memories><memory_segment>"
    "I put the red key in the top drawer</memory_segment></relevant_memories>"
    "<model_reasoning>top drawer</model_reasoning>"
)


def client(handler) -> httpx.Client:
    return httpx.Client(transport=httpx.MockTransport(handler))


def wire_request() -> CompletionRequest:
    msgs = WIRE["request"]["messages"]
    return CompletionRequest(system=msgs[0]["content"], user=msgs[1]["content"], prefix_state="4f1c2a")


def test_wire_fixture_round_trip():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json=WIRE["response"])

    backend = ChatCompletionsBackend(
        "small-model", Role.SMALL, send_cache_key=True,
        base_url="http://provider.test/v1/", api_key="sk-test", client=client(handler),
    )
    comp = backend.complete(wire_request())
    assert seen["url"] == "http://provider.test/v1/chat/completions"
    assert seen["body"] == WIRE["request"]
    assert seen["auth"] == "Bearer sk-test"
    assert comp.text == WIRE["response"]["choices"][0]["message"]["content"]
    assert comp.usage == TokenUsage(37, 41, Role.SMALL)


def test_cache_key_only_sent_when_enabled():
    body = ChatCompletionsBackend("m", base_url="http://x", api_key="").build_body(wire_request())
    assert "prompt_cache_key" not in body


@pytest.mark.parametrize("failure", [429, 500, 503, "transport"])
def test_retries_then_succeeds(failure):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            if failure == "transport":
                raise httpx.ConnectError("down", request=request)
            return httpx.Response(failure)
        return httpx.Response(200, json=WIRE["response"])

    backend = ChatCompletionsBackend("m", base_url="http://x", backoff_base=0, client=client(handler))
    assert backend.complete(wire_request()).usage.prompt_tokens == 37
    assert len(calls) == 3


def test_gives_up_after_three_attempts():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(502)

    backend = ChatCompletionsBackend("m", base_url="http://x", backoff_base=0, client=client(handler))
    with pytest.raises(RetriableBackendError) as info:
        backend.complete(wire_request())
    assert info.value.retriable
    assert len(calls) == 3


def test_provider_error_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, json={"error": {"message": "model not found", "type": "invalid_request"}})

    backend = ChatCompletionsBackend("m", base_url="http://x", backoff_base=0, client=client(handler))
    with pytest.raises(ProviderError, match="model not found") as info:
        backend.complete(wire_request())
    assert not info.value.retriable
    assert len(calls) == 1


def test_error_payload_with_200_is_provider_error():
    backend = ChatCompletionsBackend(
        "m", base_url="http://x", client=client(lambda r: httpx.Response(200, json={"error": "quota exceeded"}))
    )
    with pytest.raises(ProviderError, match="quota exceeded"):
        backend.complete(wire_request())


def test_malformed_payload_is_provider_error():
    backend = ChatCompletionsBackend("m", base_url="http://x", client=client(lambda r: httpx.Response(200, json={})))
    with pytest.raises(ProviderError):
        backend.complete(wire_request())


def test_remote_embedding():
    def handler(request):
        assert json.loads(request.content) == {"model": "emb", "input": "hello"}
        return httpx.Response(200, json={"data": [{"embedding": [0.5, 0.25, 0.0]}]})

    provider = RemoteEmbeddingProvider("emb", base_url="http://x", client=client(handler))
    assert provider.embed("hello") == [0.5, 0.25, 0.0]
    assert provider.dimension == 3


# -- mocks -------------------------------------------------------------------

def test_scripted_reply_and_usage():
    backend = ScriptedBackend([ScriptRule(reply=MODE_A, user_contains="Where is the red key?")])
    req = CompletionRequest(system="ctx", user="Where is the red key?")
    a, b = backend.complete(req), backend.complete(req)
    assert a.text == MODE_A
    assert a == b
    assert a.usage.prompt_tokens == 1 + 5
    assert a.usage.role is Role.SMALL


def test_strict_mock_rejects_unscripted():
    backend = ScriptedBackend([ScriptRule(reply="x", user_contains="red key")], strict=True)
    with pytest.raises(ScriptNotFoundError):
        backend.complete(CompletionRequest(system="", user="Where is the blue pen?"))


def test_lenient_mock_falls_back_to_oracle():
    backend = ScriptedBackend([], strict=False, fallback=ExtractiveOracle())
    comp = backend.complete(CompletionRequest(system="", user="hi", metadata={"task": "plan"}))
    assert comp.text == "<final/>"


@settings(max_examples=50, deadline=None)
@given(st.text(max_size=80), st.text(max_size=80))
def test_oracle_is_deterministic(query, context):
    req = CompletionRequest("s", query, metadata={"task": "assist", "query": query, "context": context})
    assert ExtractiveOracle().complete(req) == ExtractiveOracle().complete(req)


def test_usage_rejects_negative_counts():
    with pytest.raises(ValueError):
        TokenUsage(-1, 0, Role.SMALL)


# -- prefix cache --------------------------------------------------------------

def test_fingerprint_is_stable_and_separates_parts():
    assert fingerprint("ctx", "prompt") == fingerprint("ctx", "prompt")
    assert fingerprint("ab", "c") != fingerprint("b", "ca")


def test_second_lookup_is_a_hit():
    cache = PrefixStateCache(4)
    builds = []
    h1, hit1 = cache.get_or_build("k", lambda: builds.append(1) or "h")
    h2, hit2 = cache.get_or_build("k", lambda: builds.append(1) or "other")
    assert (h1, hit1, h2, hit2) == ("h", False, "h", True)
    assert builds == [1]
    assert cache.stats() == {"hits": 1, "misses": 1, "hit_rate": 0.5}


def test_lru_eviction():
    cache = PrefixStateCache(2)
    cache.lookup_or_insert("a", lambda: "A")
    cache.lookup_or_insert("b", lambda: "B")
    cache.lookup_or_insert("a", lambda: "A2")  # refresh a
    cache.lookup_or_insert("c", lambda: "C")
    assert "a" in cache and "c" in cache and "b" not in cache
    assert len(cache) == 2


def test_failed_build_degrades_to_miss():
    cache = PrefixStateCache(2)

    def boom():
        raise RuntimeError("no state")

    assert cache.get_or_build("k", boom) == (None, False)
    assert "k" not in cache
    assert cache.lookup_or_insert("k", lambda: "h") == "h"


def test_concurrent_build_happens_once():
    cache = PrefixStateCache(4)
    builds = []
    gate = threading.Event()

    def build():
        builds.append(1)
        gate.wait(1)
        return "handle"

    results = []
    threads = [threading.Thread(target=lambda: results.append(cache.get_or_build("k", build))) for _ in range(8)]
    for t in threads:
        t.start()
    time.sleep(0.05)
    gate.set()
    for t in threads:
        t.join()
    assert builds == [1]
    assert [h for h, _ in results] == ["handle"] * 8
    assert sum(1 for _, hit in results if not hit) == 1
