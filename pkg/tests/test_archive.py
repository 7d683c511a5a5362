from __future__ import annotations

import random
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epimem.archive import (
    LOG_NAME,
    Archive,
    ArchiveIOError,
    ArchiveStats,
    UnitConflictError,
    UnitNotFoundError,
    decode_unit,
    encode_unit,
)
from epimem.indexer import build_lexical_stats
from epimem.segmenter import Record
from epimem.units import SummaryRecord, UnitState, make_unit_id, split_unit_id
from epimem.units import MemoryUnit


def unit(i: int, text: str, stream: str = "s", *, state=UnitState.ARCHIVED, vec=True) -> MemoryUnit:
    rng = np.random.default_rng(i)
    return MemoryUnit(
        unit_id=make_unit_id(stream, i),
        text=text,
        start=i * 10,
        end=i * 10 + 9,
        state=state,
        records=(Record(ordinal=i, speaker="Ann", timestamp=f"2024-01-0{i % 9 + 1}", source_id=f"d{i}"),),
        summary=SummaryRecord(make_unit_id(stream, i), f"summary {i}", speakers=("Ann",)) if vec else None,
        context_embedding=rng.standard_normal(8).astype(np.float32) if vec else None,
        summary_embedding=rng.standard_normal(8).astype(np.float32) if vec else None,
    )


def assert_same(a: MemoryUnit, b: MemoryUnit) -> None:
    assert a == b
    assert a.text.encode() == b.text.encode()
    for name in ("context_embedding", "summary_embedding"):
        x, y = getattr(a, name), getattr(b, name)
        if x is None:
            assert y is None
        else:
            assert x.dtype == y.dtype == np.float32
            assert x.tobytes() == y.tobytes()


def test_unit_ids_are_stream_and_index():
    assert make_unit_id("conv-1", 3) == "conv-1:3"
    assert split_unit_id("conv-1:3") == ("conv-1", 3)


def test_store_three_units_counts_terms():
    ar = Archive()
    for i, text in enumerate(["red key drawer", "blue folder", "red key kitchen table"], start=1):
        ar.store(unit(i, text))
    st_ = ar.stats
    assert st_.unit_count == 3
    assert st_.total_tokens == 9
    assert st_.df == {"red": 2, "key": 2, "drawer": 1, "blue": 1, "folder": 1, "kitchen": 1, "table": 1}
    assert st_.avg_doc_len == 3.0


def test_empty_text_unit_is_accepted():
    ar = Archive()
    ar.store(unit(1, "alpha beta"))
    before = dict(ar.stats.df)
    ar.store(unit(2, ""))
    assert ar.stats.unit_count == 2
    assert ar.load("s:2").lexical.length == 0
    assert ar.stats.df == before


def test_duplicate_id_conflicts():
    ar = Archive()
    ar.store(unit(1, "x"))
    with pytest.raises(UnitConflictError):
        ar.store(unit(1, "y"))


def test_active_tail_can_be_superseded():
    ar = Archive()
    ar.store(unit(1, "partial", state=UnitState.ACTIVE_TAIL))
    ar.store(unit(1, "partial and complete"))
    assert ar.load("s:1").text == "partial and complete"
    assert ar.stats.total_tokens == 3
    assert ar.stats.df["partial"] == 1


def test_load_unknown():
    with pytest.raises(UnitNotFoundError):
        Archive().load("s:99")


def test_reopen_round_trip(tmp_path):
    stored = [unit(i, f"text number {i} with ünïcode") for i in range(1, 6)]
    stored.append(unit(6, "pending fields", vec=False))
    with Archive(tmp_path) as ar:
        for u in stored:
            ar.store(u)
        stats = ar.stats
    reopened = Archive(tmp_path)
    assert reopened.stats == stats
    for u in stored:
        assert_same(reopened.load(u.unit_id), ar.load(u.unit_id))
        assert_same(reopened.read_from_disk(u.unit_id), ar.load(u.unit_id))


def test_attach_fills_deferred_fields_once(tmp_path):
    ar = Archive(tmp_path)
    ar.store(unit(1, "later", vec=False))
    vec = np.ones(4, dtype=np.float32)
    ar.attach("s:1", context_embedding=vec)
    with pytest.raises(UnitConflictError):
        ar.attach("s:1", context_embedding=vec)
    again = Archive(tmp_path).load("s:1")
    assert again.context_embedding.tobytes() == vec.tobytes()
    assert again.summary is None


def test_encode_decode_is_bit_exact():
    u = unit(7, "a b c")
    u = u.with_index(lexical=build_lexical_stats(u.text))
    blob = encode_unit(u)
    assert_same(decode_unit(blob[4:]), u)
    assert encode_unit(decode_unit(blob[4:])) == blob


def test_failed_write_leaves_stats_untouched(tmp_path):
    ar = Archive(tmp_path)
    ar.store(unit(1, "one two"))
    stats = ar.stats
    ar._fail_next_write = True
    with pytest.raises(ArchiveIOError):
        ar.store(unit(2, "three four"))
    assert ar.stats == stats
    assert "s:2" not in ar
    assert Archive(tmp_path).stats == stats


def test_torn_tail_is_truncated_on_open(tmp_path):
    ar = Archive(tmp_path)
    ar.store(unit(1, "kept"))
    with open(tmp_path / LOG_NAME, "ab") as fh:
        fh.write(b"\x50\x00\x00\x00partial")
    reopened = Archive(tmp_path)
    assert reopened.unit_ids() == ["s:1"]
    reopened.store(unit(2, "after crash"))
    assert Archive(tmp_path).unit_ids() == ["s:1", "s:2"]


def test_lost_index_is_rebuilt(tmp_path):
    ar = Archive(tmp_path)
    for i in range(1, 4):
        ar.store(unit(i, f"u{i}"))
    (tmp_path / "units.idx").unlink()
    assert Archive(tmp_path).unit_ids() == ["s:1", "s:2", "s:3"]


def test_many_stores_random_loads():
    ar = Archive()
    rng = random.Random(3)
    texts = {}
    for i in range(1, 1001):
        t = " ".join(rng.choice("abcdefgh") for _ in range(rng.randint(0, 6)))
        texts[i] = t
        ar.store(unit(i, t, vec=False))
    for i in rng.sample(range(1, 1001), 100):
        assert ar.load(f"s:{i}").text == texts[i]
    assert ar.stats.unit_count == 1000


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(alphabet="abc xyz", max_size=30), max_size=25), st.data())
def test_incremental_stats_match_recomputation(texts, data):
    ar = Archive()
    for i, t in enumerate(texts, start=1):
        state = data.draw(st.sampled_from([UnitState.ARCHIVED, UnitState.ACTIVE_TAIL]))
        ar.store(unit(i, t, state=state, vec=False))
        if state is UnitState.ACTIVE_TAIL and data.draw(st.booleans()):
            ar.store(unit(i, t + " extra", vec=False))
    snap = ar.snapshot()
    assert ar.stats == ArchiveStats.compute(snap.units)
    assert all(df <= ar.stats.unit_count for df in ar.stats.df.values())


def test_activation_is_scoped_and_dormant_by_default():
    ar = Archive()
    ar.store(unit(1, "x"))
    ar.store(unit(2, "y"))
    assert ar.activation_state("s:1") == "dormant"
    with ar.activated(["s:1"]):
        assert ar.activation_state("s:1") == "active-for-inference"
        assert ar.activation_state("s:2") == "dormant"
    assert ar.activation_state("s:1") == "dormant"


def test_snapshot_restrict_and_order():
    ar = Archive()
    for i in (10, 2, 1):
        ar.store(unit(i, "t", stream="b"))
    ar.store(unit(1, "t", stream="a"))
    assert [u.unit_id for u in ar.snapshot().units] == ["a:1", "b:1", "b:2", "b:10"]
    assert [u.unit_id for u in ar.snapshot("b").units] == ["b:1", "b:2", "b:10"]
    assert ar.snapshot("b").stats.unit_count == 3


def test_concurrent_readers_see_consistent_stats():
    ar = Archive()
    errors = []

    def writer():
        for i in range(1, 301):
            ar.store(unit(i, "alpha beta gamma", vec=False))

    def reader():
        for _ in range(300):
            snap = ar.snapshot()
            if snap.stats.total_tokens != 3 * len(snap.units):
                errors.append(snap.stats)

    threads = [threading.Thread(target=writer)] + [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
