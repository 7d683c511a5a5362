from __future__ import annotations

import math
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epimem.segmenter import (
    ContextState,
    EpisodicContext,
    Record,
    Segmenter,
    SegmenterConfig,
    SegmenterConfigError,
    SegmentStateError,
    StreamError,
    Token,
    TokenStream,
    append,
    read_records,
    segment_stream,
)


def words(n: int) -> TokenStream:
    return TokenStream.from_words([f"w{i}" for i in range(1, n + 1)])


def spans(contexts):
    return [(c.start, c.end) for c in contexts]


def incremental(stream, cfg, chunk=1):
    seg = Segmenter(cfg)
    toks = list(stream)
    out = []
    for i in range(0, len(toks), chunk):
        out.extend(seg.append(toks[i:i + chunk]))
    if seg.active is not None:
        out.append(seg.active)
    return out


class TestConfig:
    def test_overlap_is_derived(self):
        assert SegmenterConfig(8, 6).overlap == 2
        assert SegmenterConfig(5, 5).overlap == 0

    @pytest.mark.parametrize("L,S", [(8, 0), (8, -1), (4, 6), (8, 2.5)])
    def test_invalid(self, L, S):
        with pytest.raises(SegmenterConfigError):
            SegmenterConfig(L, S)

    def test_defaults_hold_about_8k_tokens(self):
        cfg = SegmenterConfig()
        assert cfg.window_length == 8192 and cfg.overlap == 512


class TestSegmentStream:
    def test_two_windows_with_overlap(self):
        ctxs = segment_stream(words(14), SegmenterConfig(8, 6))
        assert [c.positions for c in ctxs] == [list(range(1, 9)), list(range(7, 15))]
        assert set(ctxs[0].positions) & set(ctxs[1].positions) == {7, 8}

    def test_disjoint_windows(self):
        ctxs = segment_stream(words(10), SegmenterConfig(5, 5))
        assert spans(ctxs) == [(1, 5), (6, 10)]

    def test_short_stream_single_active(self):
        ctxs = segment_stream(words(3), SegmenterConfig(8, 6))
        assert spans(ctxs) == [(1, 3)]
        assert ctxs[0].state is ContextState.ACTIVE

    def test_empty_stream(self):
        assert segment_stream(TokenStream(), SegmenterConfig(8, 6)) == []

    def test_full_last_window_is_archived(self):
        ctxs = segment_stream(words(14), SegmenterConfig(8, 6))
        assert [c.state for c in ctxs] == [ContextState.ARCHIVED, ContextState.ARCHIVED]

    def test_partial_tail_is_active(self):
        ctxs = segment_stream(words(17), SegmenterConfig(8, 6))
        assert spans(ctxs) == [(1, 8), (7, 14), (13, 17)]
        assert ctxs[-1].state is ContextState.ACTIVE

    def test_text_is_verbatim(self):
        ctxs = segment_stream(TokenStream.from_text("a b c d e f"), SegmenterConfig(4, 3))
        assert ctxs[0].text == "a b c d"
        assert ctxs[1].text == "d e f"

    def test_archived_contexts_are_immutable(self):
        ctx = segment_stream(words(8), SegmenterConfig(8, 6))[0]
        with pytest.raises((TypeError, AttributeError)):
            ctx.tokens.append(Token("x", 9))


class TestAppend:
    cfg = SegmenterConfig(8, 6)

    def _active_with(self, n):
        return EpisodicContext(index=1, tokens=list(words(n)))

    def test_fill_to_capacity_archives_and_carries_delta(self):
        active = self._active_with(6)
        new = [Token("w7", 7), Token("w8", 8)]
        active, done = append(active, new, self.cfg)
        assert len(done) == 1 and len(done[0]) == 8
        assert done[0].state is ContextState.ARCHIVED
        assert active.positions == [7, 8]
        assert active.carried == 2

    def test_overflow_keeps_successor_active(self):
        active = self._active_with(6)
        new = [Token(f"w{i}", i) for i in range(7, 12)]
        active, done = append(active, new, self.cfg)
        assert len(done) == 1
        assert active.positions == [7, 8, 9, 10, 11]
        assert active.state is ContextState.ACTIVE

    def test_append_nothing(self):
        active = self._active_with(6)
        same, done = append(active, [], self.cfg)
        assert done == [] and same.positions == list(range(1, 7))

    def test_append_to_archived_fails(self):
        archived = segment_stream(words(8), self.cfg)[0]
        with pytest.raises(SegmentStateError):
            append(archived, [Token("x", 9)], self.cfg)

    def test_position_gap_rejected(self):
        with pytest.raises(StreamError):
            append(self._active_with(3), [Token("x", 7)], self.cfg)


@st.composite
def stream_and_cfg(draw, max_len=500, max_L=32):
    L = draw(st.integers(1, max_L))
    S = draw(st.integers(1, L))
    n = draw(st.integers(0, max_len))
    return n, SegmenterConfig(L, S)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(stream_and_cfg(), st.integers(1, 40))
    def test_incremental_matches_whole_stream(self, case, chunk):
        n, cfg = case
        stream = words(n)
        whole = segment_stream(stream, cfg)
        inc = incremental(stream, cfg, chunk)
        assert [c.positions for c in inc] == [c.positions for c in whole]
        assert [c.state for c in inc] == [c.state for c in whole]

    @settings(max_examples=200, deadline=None)
    @given(stream_and_cfg())
    def test_window_positions_follow_formula(self, case):
        n, cfg = case
        L, S = cfg.window_length, cfg.stride
        for c in segment_stream(words(n), cfg):
            i = c.index
            expected = [t for t in range(1, n + 1) if (i - 1) * S < t <= (i - 1) * S + L]
            assert c.positions == expected

    @settings(max_examples=200, deadline=None)
    @given(stream_and_cfg())
    def test_overlap_and_coverage(self, case):
        n, cfg = case
        ctxs = segment_stream(words(n), cfg)
        d = cfg.overlap
        archived = [c for c in ctxs if c.state is ContextState.ARCHIVED]
        for a, b in zip(archived, archived[1:]):
            assert a.positions[len(a) - d:] == b.positions[:d]
        counts: dict[int, int] = {}
        for c in ctxs:
            for p in c.positions:
                counts[p] = counts.get(p, 0) + 1
        assert set(counts) == set(range(1, n + 1))
        if counts:
            assert max(counts.values()) <= math.ceil(cfg.window_length / cfg.stride)


def _records_stream(turn_lengths):
    recs = [(Record(ordinal=i, speaker=f"s{i % 2}"), " ".join(f"t{i}_{j}" for j in range(k)))
            for i, k in enumerate(turn_lengths)]
    return TokenStream.from_records(recs)


class TestTurnAware:
    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.integers(1, 12), min_size=1, max_size=40), st.integers(4, 24), st.data())
    def test_turn_mode_covers_and_matches_incremental(self, turns, L, data):
        S = data.draw(st.integers(1, L))
        cfg = SegmenterConfig(L, S, respect_turns=True)
        stream = _records_stream(turns)
        whole = segment_stream(stream, cfg)
        inc = incremental(stream, cfg, chunk=data.draw(st.integers(1, 9)))
        assert [c.positions for c in inc] == [c.positions for c in whole]
        covered = sorted({p for c in whole for p in c.positions})
        assert covered == list(range(1, len(stream) + 1))
        for c in whole:
            assert len(c) <= L

    def test_window_does_not_split_a_turn(self):
        cfg = SegmenterConfig(10, 8, respect_turns=True)
        stream = _records_stream([4, 4, 4, 4])
        ctxs = segment_stream(stream, cfg)
        first = ctxs[0]
        assert first.state is ContextState.ARCHIVED
        assert len(first) == 8  # the third turn would not fit whole
        # no whole turn fits in the 2-token overlap, so the last 2 tokens carry over
        assert ctxs[1].positions[:2] == [7, 8]

    def test_turn_longer_than_window_is_split(self):
        cfg = SegmenterConfig(5, 4, respect_turns=True)
        ctxs = segment_stream(_records_stream([12]), cfg)
        assert max(len(c) for c in ctxs) == 5
        assert sorted({p for c in ctxs for p in c.positions}) == list(range(1, 13))


def test_append_cost_does_not_grow_with_archive_size():
    cfg = SegmenterConfig(16, 12)

    def per_token(n_contexts):
        n = n_contexts * cfg.stride + cfg.overlap
        toks = list(words(n))
        seg = Segmenter(cfg)
        t0 = time.perf_counter()
        for tok in toks:
            seg.append((tok,))
        return (time.perf_counter() - t0) / n, seg.archived_count

    per_token(10)  # warm-up
    small, n_small = min(per_token(10) for _ in range(3))
    large, n_large = min(per_token(1000) for _ in range(3))
    assert n_small == 10 and n_large == 1000
    assert large < 2 * small


def test_read_records_jsonl_and_plain(tmp_path):
    p = tmp_path / "in.txt"
    p.write_text('{"speaker": "Ann", "timestamp": "t1", "text": "hello there"}\nplain line\n\n', encoding="utf-8")
    recs = read_records(p)
    assert [(r.speaker, r.timestamp, t) for r, t in recs] == [("Ann", "t1", "hello there"), (None, None, "plain line")]
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"speaker": "Ann"}\n', encoding="utf-8")
    with pytest.raises(StreamError):
        read_records(bad)
