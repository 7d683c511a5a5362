"""Tolerant parsers for the tagged output grammars.

Grammar rules, applied to every format below:

* tags are matched case-sensitively by name, may carry attributes, and may
  appear in any order; text outside known tags and unknown tags are ignored;
* ``<!-- ... -->`` comments are removed first;
* the first occurrence of a singular tag is used; repeated tags
  (``memory_segment``, ``quote``) are collected in order;
* an opening tag without its closing tag is a failure for that field only
  (recorded in ``errors``); a missing tag simply leaves the field empty;
* inner text is stripped and the XML entities ``&lt; &gt; &amp; &quot; &apos;``
  are decoded.

Formats:

retrieval (assistant)
    ``response_type``, ``relevant_memories`` > ``memory_segment``*,
    ``model_reasoning``.  Failed when neither the memories block nor the
    reasoning could be read.
summary
    ``response_type``, ``summary_content`` > ``speakers``, ``time_period``,
    ``key_items``, ``main_events``.  Failed when ``summary_content`` is
    missing or unclosed.
aggregator (master)
    optional ``aggregator_output`` wrapper > ``evidence_quotes`` >
    ``quote timestamp="..."``*, ``logic_trace``, ``answer_core``.  Failed when
    ``answer_core`` is missing, unclosed or empty.
planner
    ``<final/>`` (or ``<final>``) ends the loop, else ``<subquery>`` text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from xml.sax.saxutils import unescape

from epimem.analyzer import normalize_whitespace

_COMMENT_RE = re.compile(r"<!--.*?-->", re.DOTALL)
_ATTR_RE = re.compile(r'([\w:-]+)\s*=\s*"([^"]*)"')
_ENTITIES = {"&quot;": '"', "&apos;": "'"}


class UnclosedTag(ValueError):
    pass


def _clean(text: str) -> str:
    return unescape(text.strip(), _ENTITIES)


def strip_comments(text: str) -> str:
    return _COMMENT_RE.sub("", text)


def _open_re(tag: str) -> re.Pattern:
    return re.compile(rf"<{re.escape(tag)}(\s[^<>]*?)?>")


def find_tag(text: str, tag: str) -> str | None:
    """Inner text of the first ``<tag>``; None if absent, UnclosedTag if unclosed."""
    m = _open_re(tag).search(text)
    if m is None or m.group(0).endswith("/>"):
        return None
    close = text.find(f"</{tag}>", m.end())
    if close < 0:
        raise UnclosedTag(tag)
    return text[m.end():close]


def find_all(text: str, tag: str) -> list[tuple[dict[str, str], str]]:
    out = []
    pos = 0
    opener = _open_re(tag)
    while True:
        m = opener.search(text, pos)
        if m is None:
            return out
        if m.group(0).endswith("/>"):
            pos = m.end()
            continue
        close = text.find(f"</{tag}>", m.end())
        if close < 0:
            raise UnclosedTag(tag)
        attrs = dict(_ATTR_RE.findall(m.group(1) or ""))
        out.append((attrs, text[m.end():close]))
        pos = close + len(tag) + 3


def _field(text: str, tag: str, errors: list[str]) -> str | None:
    try:
        inner = find_tag(text, tag)
    except UnclosedTag:
        errors.append(f"unclosed <{tag}>")
        return None
    return None if inner is None else _clean(inner)


def _split_list(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    value = value.strip().strip("[]")
    parts = re.split(r"[,;\n]", value)
    return tuple(p.strip(" -*\t") for p in parts if p.strip(" -*\t"))


@dataclass
class ParsedRetrieval:
    response_type: str | None = None
    memory_segments: list[str] = field(default_factory=list)
    reasoning: str | None = None
    errors: list[str] = field(default_factory=list)
    ok: bool = False


def parse_retrieval(text: str) -> ParsedRetrieval:
    text = strip_comments(text)
    out = ParsedRetrieval()
    out.response_type = _field(text, "response_type", out.errors)
    segments_ok = False
    try:
        block = find_tag(text, "relevant_memories")
    except UnclosedTag:
        out.errors.append("unclosed <relevant_memories>")
        block = None
    else:
        scope = block if block is not None else text
        try:
            out.memory_segments = [_clean(inner) for _, inner in find_all(scope, "memory_segment")]
            segments_ok = block is not None or bool(out.memory_segments)
        except UnclosedTag:
            out.errors.append("unclosed <memory_segment>")
    out.memory_segments = [s for s in out.memory_segments if s]
    out.reasoning = _field(text, "model_reasoning", out.errors)
    out.ok = segments_ok or out.reasoning is not None
    return out


@dataclass
class ParsedSummary:
    response_type: str | None = None
    speakers: tuple[str, ...] = ()
    time_period: str = ""
    key_items: tuple[str, ...] = ()
    main_events: str = ""
    errors: list[str] = field(default_factory=list)
    ok: bool = False


def parse_summary(text: str) -> ParsedSummary:
    text = strip_comments(text)
    out = ParsedSummary()
    out.response_type = _field(text, "response_type", out.errors)
    content = _field(text, "summary_content", out.errors)
    if content is None:
        if not out.errors:
            out.errors.append("missing <summary_content>")
        return out
    # re-read inner fields from the raw (still escaped) block
    raw = find_tag(text, "summary_content") or ""
    out.speakers = _split_list(_field(raw, "speakers", out.errors))
    out.time_period = _field(raw, "time_period", out.errors) or ""
    out.key_items = _split_list(_field(raw, "key_items", out.errors))
    out.main_events = normalize_whitespace(_field(raw, "main_events", out.errors) or "")
    out.ok = True
    return out


@dataclass
class ParsedAggregate:
    evidence_quotes: list[tuple[str | None, str]] = field(default_factory=list)
    logic_trace: str = ""
    answer_core: str | None = None
    errors: list[str] = field(default_factory=list)
    ok: bool = False


def parse_aggregate(text: str) -> ParsedAggregate:
    text = strip_comments(text)
    out = ParsedAggregate()
    scope = text
    try:
        wrapped = find_tag(text, "aggregator_output")
    except UnclosedTag:
        out.errors.append("unclosed <aggregator_output>")
        wrapped = None
    if wrapped is not None:
        scope = wrapped
    try:
        quotes_block = find_tag(scope, "evidence_quotes")
        if quotes_block is not None:
            out.evidence_quotes = [
                (attrs.get("timestamp"), _clean(inner)) for attrs, inner in find_all(quotes_block, "quote")
            ]
    except UnclosedTag as exc:
        out.errors.append(f"unclosed <{exc}>")
    out.logic_trace = _field(scope, "logic_trace", out.errors) or ""
    answer = _field(scope, "answer_core", out.errors)
    out.answer_core = normalize_whitespace(answer) if answer else None
    out.ok = bool(out.answer_core)
    return out


@dataclass
class ParsedPlan:
    final: bool
    subquery: str | None
    ok: bool


_FINAL_RE = re.compile(r"<final\s*/?>")


def parse_plan(text: str) -> ParsedPlan:
    text = strip_comments(text)
    if _FINAL_RE.search(text):
        return ParsedPlan(True, None, True)
    try:
        sub = find_tag(text, "subquery")
    except UnclosedTag:
        sub = None
    if sub and sub.strip():
        return ParsedPlan(False, normalize_whitespace(_clean(sub)), True)
    return ParsedPlan(True, None, False)


def is_verbatim(segment: str, context: str) -> bool:
    """Whitespace-normalized substring test."""
    seg = normalize_whitespace(segment)
    return bool(seg) and seg in normalize_whitespace(context)
