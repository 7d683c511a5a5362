"""Prefix-state cache: fingerprint of (context text, prompt prefix) -> opaque handle.

This stands in for materialized attention key/value state.  The engine never
sees tensor bytes; a handle is whatever the provider uses to resume from a
cached prefix.  A hit never changes a completion, only its cost.
"""

from __future__ import annotations

import hashlib
import threading
import time
from collections import OrderedDict
from concurrent.futures import Future
from dataclasses import dataclass
from typing import Any, Callable


def fingerprint(context_text: str, prompt_prefix: str) -> str:
    h = hashlib.sha256()
    h.update(prompt_prefix.encode("utf-8"))
    h.update(b"\x00")
    h.update(context_text.encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class CacheEntry:
    handle: Any
    created: float


class PrefixStateCache:
    def __init__(self, capacity: int = 256) -> None:
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity
        self._entries: OrderedDict[str, CacheEntry] = OrderedDict()
        self._pending: dict[str, Future] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._entries

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def lookup_or_insert(self, key: str, build: Callable[[], Any]) -> Any:
        """Return the cached handle, building it at most once per key."""
        return self.get_or_build(key, build)[0]

    def get_or_build(self, key: str, build: Callable[[], Any]) -> tuple[Any, bool]:
        """Like :meth:`lookup_or_insert` but also reports whether it was a hit."""
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                self._entries.move_to_end(key)
                self.hits += 1
                return entry.handle, True
            fut = self._pending.get(key)
            if fut is not None:
                self.hits += 1
                owner = False
            else:
                fut = Future()
                self._pending[key] = fut
                self.misses += 1
                owner = True
        if not owner:
            return fut.result(), True
        try:
            handle = build()
        except Exception:
            # best effort: a failed build behaves like an uncached call
            with self._lock:
                self._pending.pop(key, None)
            fut.set_result(None)
            return None, False
        with self._lock:
            self._entries[key] = CacheEntry(handle, time.time())
            self._entries.move_to_end(key)
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)
            self._pending.pop(key, None)
        fut.set_result(handle)
        return handle, False

    def stats(self) -> dict[str, float]:
        return {"hits": self.hits, "misses": self.misses, "hit_rate": self.hit_rate}
