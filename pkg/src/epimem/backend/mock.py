"""Deterministic, provider-free backends for tests, fixtures and evaluation.

Token usage under these backends is counted with the engine analyzer
(``prompt = system + user``, ``completion = reply``), which will not match
any real provider's tokenizer.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence
from xml.sax.saxutils import escape

from epimem.analyzer import content_terms, count_tokens
from epimem.backend.base import (
    Completion,
    CompletionRequest,
    RetriableBackendError,
    Role,
    ScriptNotFoundError,
    TokenUsage,
)

ABSTAIN = "The information is not mentioned in the memory."

_HEADER_RE = re.compile(r"^(?:\[(?P<ts>[^\]]*)\]\s*)?(?:(?P<who>[^:\n]{1,60}):\s)?(?P<body>.*)$")


def _usage(request: CompletionRequest, reply: str, role: Role) -> TokenUsage:
    return TokenUsage(count_tokens(request.system) + count_tokens(request.user), count_tokens(reply), role)


class _Recorder:
    def __init__(self, role: Role) -> None:
        self.role = role
        self.calls: list[tuple[CompletionRequest, Completion]] = []
        self._lock = threading.Lock()

    def _record(self, request: CompletionRequest, text: str) -> Completion:
        comp = Completion(text, _usage(request, text, self.role))
        with self._lock:
            self.calls.append((request, comp))
        return comp

    def prefix_handle(self, fingerprint: str) -> Any:
        return f"prefix:{fingerprint[:16]}"

    @property
    def total_usage(self) -> int:
        with self._lock:
            return sum(c.usage.total for _, c in self.calls)


class ExtractiveOracle(_Recorder):
    """Rule-based stand-in for both model roles.

    * summarize: MODE-B block built from speakers, bracketed timestamps,
      frequent content terms and the leading lines of the context;
    * assist: quotes, verbatim, the context lines sharing the most content
      terms with the query (MODE-A), or reports missing information;
    * aggregate: answers with the best-overlapping evidence quote body;
    * plan: always finishes.
    """

    def __init__(self, role: Role = Role.SMALL, max_quotes: int = 3, summary_words: int = 120) -> None:
        super().__init__(role)
        self.max_quotes = max_quotes
        self.summary_words = summary_words

    def complete(self, request: CompletionRequest) -> Completion:
        task = request.task
        if task == "summarize":
            text = self.summarize(request.metadata.get("context", ""))
        elif task == "assist":
            text = self.assist(request.metadata.get("query", request.user), request.metadata.get("context", ""))
        elif task == "aggregate":
            text = self.aggregate(request.metadata.get("query", ""), request.metadata.get("quotes", []))
        elif task == "plan":
            text = "<final/>"
        else:
            text = request.user
        return self._record(request, text)

    def summarize(self, context: str) -> str:
        speakers: dict[str, None] = {}
        stamps: list[str] = []
        bodies: list[str] = []
        for line in context.splitlines():
            m = _HEADER_RE.match(line)
            if m.group("who"):
                speakers.setdefault(m.group("who").strip(), None)
            if m.group("ts"):
                stamps.append(m.group("ts"))
            bodies.append(m.group("body"))
        freq: dict[str, int] = {}
        for term in content_terms(" ".join(bodies)):
            freq[term] = freq.get(term, 0) + 1
        items = sorted(freq, key=lambda t: (-freq[t], t))[:8]
        words = " ".join(bodies).split()[: self.summary_words]
        period = f"{stamps[0]} to {stamps[-1]}" if stamps else "unspecified"
        return (
            "<response_type>summary</response_type>\n<summary_content>\n"
            f"<speakers>{escape(', '.join(speakers))}</speakers>\n"
            f"<time_period>{escape(period)}</time_period>\n"
            f"<key_items>{escape(', '.join(items))}</key_items>\n"
            f"<main_events>{escape(' '.join(words))}</main_events>\n"
            "</summary_content>"
        )

    def select_lines(self, query: str, context: str) -> list[str]:
        wanted = set(content_terms(query))
        scored = []
        for i, line in enumerate(context.splitlines()):
            overlap = len(wanted & set(content_terms(_HEADER_RE.match(line).group("body"))))
            if overlap:
                scored.append((overlap, i, line))
        best = sorted(scored, key=lambda s: (-s[0], s[1]))[: self.max_quotes]
        return [line for _, _, line in sorted(best, key=lambda s: s[1])]

    def assist(self, query: str, context: str) -> str:
        lines = self.select_lines(query, context)
        if not lines:
            return (
                "<response_type>retrieval</response_type>\n<relevant_memories>\n</relevant_memories>\n"
                "<model_reasoning>The information is missing from the provided memory.</model_reasoning>"
            )
        segs = "\n".join(f"<memory_segment>{escape(line)}</memory_segment>" for line in lines)
        first = _HEADER_RE.match(lines[0]).group("body")
        return (
            "<response_type>retrieval</response_type>\n"
            f"<relevant_memories>\n{segs}\n</relevant_memories>\n"
            f"<model_reasoning>Based on the segments above, the answer is: {escape(first)}</model_reasoning>"
        )

    def aggregate(self, query: str, quotes: Sequence[str]) -> str:
        wanted = set(content_terms(query))
        best = None
        best_score = 0
        for q in quotes:
            body = _HEADER_RE.match(q).group("body")
            score = len(wanted & set(content_terms(body)))
            if score > best_score:
                best, best_score = body, score
        answer = best if best is not None else ABSTAIN
        quote_xml = "\n".join(f"<quote>{escape(q)}</quote>" for q in quotes)
        return (
            "<aggregator_output>\n"
            f"<evidence_quotes>\n{quote_xml}\n</evidence_quotes>\n"
            "<logic_trace>Selected the quote with the largest overlap with the query.</logic_trace>\n"
            f"<answer_core>{escape(answer)}</answer_core>\n"
            "</aggregator_output>"
        )


@dataclass
class ScriptRule:
    """Reply when every given matcher is a (case-insensitive) substring.

    ``query_contains``/``context_contains`` look at request metadata,
    ``system_contains``/``user_contains`` at the prompt itself.  ``error``
    set to "transport" makes the rule raise a retriable error instead.
    """

    reply: str | Callable[[CompletionRequest], str] = ""
    task: str | None = None
    query_contains: str | None = None
    context_contains: str | None = None
    system_contains: str | None = None
    user_contains: str | None = None
    error: str | None = None

    def matches(self, request: CompletionRequest) -> bool:
        if self.task is not None and request.task != self.task:
            return False
        checks = (
            (self.query_contains, request.metadata.get("query", "")),
            (self.context_contains, request.metadata.get("context", "")),
            (self.system_contains, request.system),
            (self.user_contains, request.user),
        )
        return all(
            needle is None or needle.lower() in str(hay).lower() for needle, hay in checks
        )

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptRule":
        allowed = {"reply", "task", "query_contains", "context_contains", "system_contains", "user_contains", "error"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown script rule keys: {sorted(unknown)}")
        return cls(**d)


class ScriptedBackend(_Recorder):
    """First matching rule wins; strict mode raises on unscripted requests."""

    def __init__(
        self,
        rules: Sequence[ScriptRule] = (),
        role: Role = Role.SMALL,
        strict: bool = True,
        fallback: ExtractiveOracle | None = None,
    ) -> None:
        super().__init__(role)
        self.rules = list(rules)
        self.strict = strict
        self.fallback = fallback

    def complete(self, request: CompletionRequest) -> Completion:
        for rule in self.rules:
            if rule.matches(request):
                if rule.error == "transport":
                    raise RetriableBackendError("scripted transport failure")
                text = rule.reply(request) if callable(rule.reply) else rule.reply
                return self._record(request, text)
        if self.fallback is not None and not self.strict:
            comp = self.fallback.complete(request)
            return self._record(request, comp.text)
        raise ScriptNotFoundError(
            f"no scripted reply for task={request.task!r} query={request.metadata.get('query')!r}"
        )

    @classmethod
    def from_file(cls, path: str | Path, role: Role) -> "ScriptedBackend":
        """Load ``{"strict": bool, "small": [rules], "large": [rules]}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [ScriptRule.from_dict(r) for r in data.get(role.value, [])]
        strict = bool(data.get("strict", False))
        return cls(rules, role=role, strict=strict, fallback=ExtractiveOracle(role))
