from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from epimem.agents.parsing import (
    is_verbatim,
    parse_aggregate,
    parse_plan,
    parse_retrieval,
    parse_summary,
)

CASES = json.loads((Path(__file__).parent / "data" / "parsing_cases.json").read_text(encoding="utf-8"))
PARSERS = {
    "retrieval": parse_retrieval,
    "summary": parse_summary,
    "aggregate": parse_aggregate,
    "plan": parse_plan,
}


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


@pytest.mark.parametrize("case", CASES, ids=[c["id"] for c in CASES])
def test_grammar_case(case):
    parsed = PARSERS[case["kind"]](case["input"])
    for key, want in case["expect"].items():
        attr = {"reasoning": "reasoning"}.get(key, key)
        assert _plain(getattr(parsed, attr)) == want, key


def test_suite_covers_every_grammar():
    assert len(CASES) >= 30
    assert {c["kind"] for c in CASES} == set(PARSERS)


@given(st.text(max_size=200))
def test_parsers_never_raise(text):
    for parse in PARSERS.values():
        parse(text)


@given(st.text(alphabet=st.characters(blacklist_characters="<>&"), min_size=1, max_size=40).filter(str.strip))
def test_round_trip_segment(seg):
    parsed = parse_retrieval(f"<relevant_memories><memory_segment>{seg}</memory_segment></relevant_memories>")
    assert parsed.memory_segments == [seg.strip()]


def test_verbatim_is_whitespace_insensitive():
    ctx = "Alice:  I put the red key\nin the top drawer."
    assert is_verbatim("I put the red key in the top drawer", ctx)
    assert not is_verbatim("I put the blue key in the top drawer", ctx)
    assert not is_verbatim("   ", ctx)
