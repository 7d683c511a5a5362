from __future__ import annotations

import json

import pytest

from epimem.archive import UnitConflictError
from epimem.config import ConfigError, EngineConfig
from epimem.engine import CONFIG_SNAPSHOT, MemoryEngine, load_input
from epimem.fixtures import fixture_path
from epimem.segmenter import TokenStream

from conftest import build_fixture_engine


def small_config() -> EngineConfig:
    return EngineConfig().replace("segmenter", window_length=8, stride=6)


def test_reingest_is_idempotent(tmp_path):
    engine = MemoryEngine.open(tmp_path, small_config())
    stream = TokenStream.from_text(" ".join(f"w{i}" for i in range(20)))
    first = engine.ingest("s", stream)
    again = engine.ingest("s", stream)
    assert [u.unit_id for u in first.units] == [u.unit_id for u in again.units]
    assert again.unchanged and not first.unchanged
    engine.close()
    reopened = MemoryEngine.open(tmp_path)
    assert reopened.ingest("s", stream).unchanged


def test_growing_stream_supersedes_the_tail():
    engine = MemoryEngine(small_config())
    words = [f"w{i}" for i in range(30)]
    first = engine.ingest("s", TokenStream.from_words(words[:10]))
    assert first.units[-1].state == "active-tail"
    grown = engine.ingest("s", TokenStream.from_words(words))
    statuses = {u.unit_id: u.status for u in grown.units}
    assert statuses["s:1"] == "unchanged"
    assert statuses["s:2"] == "superseded"
    assert len(engine.archive) == len(grown.units)


def test_changed_archived_content_conflicts():
    engine = MemoryEngine(small_config())
    engine.ingest("s", TokenStream.from_text("a b c d e f g h i j k l m n"))
    with pytest.raises(UnitConflictError):
        engine.ingest("s", TokenStream.from_text("z b c d e f g h i j k l m n"))


def test_stream_id_may_not_contain_colon():
    with pytest.raises(ValueError):
        MemoryEngine().ingest("a:b", TokenStream.from_text("x"))


def test_snapshot_written_and_checked(tmp_path):
    MemoryEngine.open(tmp_path, small_config()).close()
    saved = json.loads((tmp_path / CONFIG_SNAPSHOT).read_text())
    assert saved["segmenter"]["window_length"] == 8
    assert MemoryEngine.open(tmp_path).config.segmenter.window_length == 8
    with pytest.raises(ConfigError, match="segmenter"):
        MemoryEngine.open(tmp_path, EngineConfig())
    # router settings may change between runs
    MemoryEngine.open(tmp_path, small_config().replace("router", tau=2)).close()


def test_load_input_formats(tmp_path):
    assert list(load_input(fixture_path("caroline", "dialogue.json"))) == ["caroline"]
    assert list(load_input(fixture_path("caroline", "dialogue.json"), "renamed")) == ["renamed"]
    needle = load_input(fixture_path("needle", "needle.json"))
    assert list(needle) == ["docs"]
    records = tmp_path / "notes.jsonl"
    records.write_text('{"speaker": "A", "text": "hello there"}\nplain line\n')
    stream = load_input(records)["notes"]
    assert [t.text for t in stream] == ["hello", "there", "plain", "line"]


def test_caroline_ingest_produces_several_units():
    engine = build_fixture_engine("caroline")
    assert len(engine.archive) >= 2
    ask = engine.ask("Where did Caroline move from 4 years ago?", stream_id="caroline")
    assert "Sweden" in ask.answer.answer_core


def test_unknown_mode():
    with pytest.raises(ValueError):
        MemoryEngine().ask("q", mode="psychic")
