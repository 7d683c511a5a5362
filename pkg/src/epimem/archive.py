"""Append-only persistent store of memory units.

On-disk layout of an archive directory::

    units.log   sequence of length-prefixed unit records
    units.idx   JSON lines {"unit_id", "offset", "length"}; last entry per id wins
    meta.json   {"format": 1}

A log record is ``u32 payload_len`` followed by the payload::

    u32 json_len | json_len bytes of UTF-8 JSON (ids, text, provenance, summary, tf map)
    u32 dim_ctx  | dim_ctx float32 (raw-context embedding; dim 0 = pending)
    u32 dim_sum  | dim_sum float32 (summary embedding; dim 0 = pending)

All integers and floats are little-endian.  ``offset`` points at the length
prefix and ``length`` counts the prefix too.  A torn trailing record (crash
during a write) is truncated on open and the index is rebuilt from the log.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import threading
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from epimem.analyzer import analyze
from epimem.segmenter import Record
from epimem.units import LexicalStats, MemoryUnit, SummaryRecord, UnitState, unit_sort_key

logger = logging.getLogger(__name__)

LOG_NAME = "units.log"
INDEX_NAME = "units.idx"
META_NAME = "meta.json"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


class ArchiveError(Exception):
    pass


class UnitConflictError(ArchiveError):
    pass


class UnitNotFoundError(ArchiveError, KeyError):
    pass


class ArchiveIOError(ArchiveError, OSError):
    pass


@dataclass(frozen=True)
class ArchiveStats:
    unit_count: int
    total_tokens: int
    df: dict[str, int]

    @property
    def avg_doc_len(self) -> float:
        return self.total_tokens / self.unit_count if self.unit_count else 0.0

    @classmethod
    def compute(cls, units: Iterable[MemoryUnit]) -> "ArchiveStats":
        n = total = 0
        df: Counter = Counter()
        for u in units:
            n += 1
            total += u.lexical.length
            df.update(u.lexical.tf.keys())
        return cls(n, total, dict(df))


@dataclass(frozen=True)
class ArchiveSnapshot:
    """Consistent read view: units in (stream, index) order plus their stats."""

    units: tuple[MemoryUnit, ...]
    stats: ArchiveStats

    def __len__(self) -> int:
        return len(self.units)

    def streams(self) -> list[str]:
        return sorted({u.stream_id for u in self.units})

    def restrict(self, stream_id: str) -> "ArchiveSnapshot":
        units = tuple(u for u in self.units if u.stream_id == stream_id)
        return ArchiveSnapshot(units, ArchiveStats.compute(units))


def encode_vector(vec: np.ndarray | None) -> bytes:
    if vec is None:
        return _U32.pack(0)
    arr = np.asarray(vec, dtype="<f4").ravel()
    return _U32.pack(arr.size) + arr.tobytes()


def decode_vector(buf: bytes, offset: int) -> tuple[np.ndarray | None, int]:
    (dim,) = _U32.unpack_from(buf, offset)
    offset += 4
    if dim == 0:
        return None, offset
    arr = np.frombuffer(buf, dtype="<f4", count=dim, offset=offset).astype(np.float32)
    return arr, offset + 4 * dim


def encode_unit(unit: MemoryUnit) -> bytes:
    """One length-prefixed log record: ``u32 len | u32 jlen | json | vec | vec``."""
    meta = {
        "unit_id": unit.unit_id,
        "text": unit.text,
        "start": unit.start,
        "end": unit.end,
        "state": unit.state.value,
        "records": [r.to_dict() for r in unit.records],
        "lexical": {"tf": unit.lexical.tf, "length": unit.lexical.length},
        "summary": unit.summary.to_dict() if unit.summary else None,
    }
    blob = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    payload = (
        _U32.pack(len(blob))
        + blob
        + encode_vector(unit.context_embedding)
        + encode_vector(unit.summary_embedding)
    )
    return _U32.pack(len(payload)) + payload


def decode_unit(payload: bytes) -> MemoryUnit:
    """Inverse of :func:`encode_unit` for the payload after the outer length."""
    (jlen,) = _U32.unpack_from(payload, 0)
    meta = json.loads(payload[4:4 + jlen].decode("utf-8"))
    ctx_vec, off = decode_vector(payload, 4 + jlen)
    sum_vec, _ = decode_vector(payload, off)
    summary = meta.get("summary")
    return MemoryUnit(
        unit_id=meta["unit_id"],
        text=meta["text"],
        start=meta["start"],
        end=meta["end"],
        state=UnitState(meta["state"]),
        records=tuple(Record.from_dict(r) for r in meta["records"]),
        lexical=LexicalStats(dict(meta["lexical"]["tf"]), meta["lexical"]["length"]),
        summary=SummaryRecord.from_dict(summary) if summary else None,
        context_embedding=ctx_vec,
        summary_embedding=sum_vec,
    )


def _as_f32(vec: np.ndarray | None) -> np.ndarray | None:
    # store what a reopen would read back, so routing is identical either way
    if vec is None:
        return None
    return np.asarray(vec, dtype=np.float32).ravel().copy()


class Archive:
    """Unit store; one writer, any number of readers.

    Pass ``path=None`` for a purely in-memory archive (used by evaluation).
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.RLock()
        self._units: dict[str, MemoryUnit] = {}
        self._offsets: dict[str, tuple[int, int]] = {}
        self._df: Counter = Counter()
        self._total = 0
        self._active: Counter = Counter()
        self._fail_next_write = False  # test hook
        if self.path is not None:
            self._open()

    # -- persistence -------------------------------------------------------

    def _open(self) -> None:
        assert self.path is not None
        self.path.mkdir(parents=True, exist_ok=True)
        meta = self.path / META_NAME
        if not meta.exists():
            meta.write_text(json.dumps({"format": FORMAT_VERSION}) + "\n", encoding="utf-8")
        log = self.path / LOG_NAME
        log.touch(exist_ok=True)
        index: dict[str, tuple[int, int]] = {}
        idx_path = self.path / INDEX_NAME
        indexed_end = 0
        if idx_path.exists():
            for line in idx_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    break
                index[entry["unit_id"]] = (entry["offset"], entry["length"])
                indexed_end = max(indexed_end, entry["offset"] + entry["length"])
        data = log.read_bytes()
        if indexed_end > len(data):
            logger.warning("index points past end of log; rebuilding index")
            index, indexed_end = {}, 0
        # records written after the last index entry (crash between writes)
        pos = indexed_end
        recovered = False
        while pos + 4 <= len(data):
            (plen,) = _U32.unpack_from(data, pos)
            if pos + 4 + plen > len(data):
                break
            unit = decode_unit(data[pos + 4:pos + 4 + plen])
            index[unit.unit_id] = (pos, plen + 4)
            pos += plen + 4
            recovered = True
        if pos < len(data):
            logger.warning("truncating %d bytes of torn record at end of log", len(data) - pos)
            with open(log, "r+b") as fh:
                fh.truncate(pos)
            data = data[:pos]
        if recovered or not idx_path.exists():
            self._rewrite_index(index)
        for uid, (off, length) in index.items():
            unit = decode_unit(data[off + 4:off + length])
            self._units[uid] = unit
            self._offsets[uid] = (off, length)
            self._add_stats(unit)

    def _rewrite_index(self, index: dict[str, tuple[int, int]]) -> None:
        assert self.path is not None
        tmp = self.path / (INDEX_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for uid, (off, length) in sorted(index.items(), key=lambda kv: kv[1][0]):
                fh.write(json.dumps({"unit_id": uid, "offset": off, "length": length}) + "\n")
        os.replace(tmp, self.path / INDEX_NAME)

    def _write(self, unit: MemoryUnit) -> tuple[int, int] | None:
        if self.path is None:
            if self._fail_next_write:
                self._fail_next_write = False
                raise ArchiveIOError("simulated write failure")
            return None
        blob = encode_unit(unit)
        log = self.path / LOG_NAME
        with open(log, "ab") as fh:
            offset = fh.tell()
            try:
                if self._fail_next_write:
                    self._fail_next_write = False
                    fh.write(blob[: len(blob) // 2])
                    raise OSError("simulated write failure")
                fh.write(blob)
                fh.flush()
                os.fsync(fh.fileno())
            except OSError as exc:
                fh.truncate(offset)
                raise ArchiveIOError(f"failed to append unit {unit.unit_id}: {exc}") from exc
        with open(self.path / INDEX_NAME, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"unit_id": unit.unit_id, "offset": offset, "length": len(blob)}) + "\n")
        return offset, len(blob)

    def close(self) -> None:
        """Nothing is buffered; kept for symmetry with open()."""

    def __enter__(self) -> "Archive":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- stats -------------------------------------------------------------

    def _add_stats(self, unit: MemoryUnit, sign: int = 1) -> None:
        self._total += sign * unit.lexical.length
        for term in unit.lexical.tf:
            self._df[term] += sign
            if self._df[term] == 0:
                del self._df[term]

    @property
    def stats(self) -> ArchiveStats:
        with self._lock:
            return ArchiveStats(len(self._units), self._total, dict(self._df))

    # -- unit lifecycle ----------------------------------------------------

    def store(self, unit: MemoryUnit) -> str:
        """Persist a unit; an active-tail unit with the same id is superseded."""
        if unit.lexical is None:
            unit = unit.with_index(lexical=LexicalStats.from_terms(analyze(unit.text)))
        unit = unit.with_index(
            context_embedding=_as_f32(unit.context_embedding),
            summary_embedding=_as_f32(unit.summary_embedding),
        )
        with self._lock:
            old = self._units.get(unit.unit_id)
            if old is not None and old.state is not UnitState.ACTIVE_TAIL:
                raise UnitConflictError(f"unit {unit.unit_id} already stored")
            loc = self._write(unit)
            if old is not None:
                self._add_stats(old, -1)
            self._units[unit.unit_id] = unit
            if loc is not None:
                self._offsets[unit.unit_id] = loc
            self._add_stats(unit)
        return unit.unit_id

    def attach(
        self,
        unit_id: str,
        *,
        summary: SummaryRecord | None = None,
        context_embedding: np.ndarray | None = None,
        summary_embedding: np.ndarray | None = None,
    ) -> MemoryUnit:
        """Fill in routing representations that were deferred at store time."""
        with self._lock:
            unit = self.load(unit_id)
            fields = {}
            for name, value in (
                ("summary", summary),
                ("context_embedding", context_embedding),
                ("summary_embedding", summary_embedding),
            ):
                if value is None:
                    continue
                if getattr(unit, name) is not None:
                    raise UnitConflictError(f"{name} of {unit_id} is already set")
                fields[name] = _as_f32(value) if name != "summary" else value
            if not fields:
                return unit
            updated = unit.with_index(**fields)
            loc = self._write(updated)
            self._units[unit_id] = updated
            if loc is not None:
                self._offsets[unit_id] = loc
            return updated

    def load(self, unit_id: str) -> MemoryUnit:
        with self._lock:
            try:
                return self._units[unit_id]
            except KeyError:
                raise UnitNotFoundError(unit_id) from None

    def read_from_disk(self, unit_id: str) -> MemoryUnit:
        """Decode a unit straight from the log via the index."""
        if self.path is None:
            return self.load(unit_id)
        with self._lock:
            if unit_id not in self._offsets:
                raise UnitNotFoundError(unit_id)
            off, length = self._offsets[unit_id]
        with open(self.path / LOG_NAME, "rb") as fh:
            fh.seek(off)
            blob = fh.read(length)
        return decode_unit(blob[4:])

    def __contains__(self, unit_id: str) -> bool:
        with self._lock:
            return unit_id in self._units

    def __len__(self) -> int:
        with self._lock:
            return len(self._units)

    def unit_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._units, key=unit_sort_key)

    def snapshot(self, stream_id: str | None = None) -> ArchiveSnapshot:
        with self._lock:
            units = tuple(self._units[uid] for uid in sorted(self._units, key=unit_sort_key))
            stats = ArchiveStats(len(self._units), self._total, dict(self._df))
        snap = ArchiveSnapshot(units, stats)
        return snap.restrict(stream_id) if stream_id is not None else snap

    # -- activation --------------------------------------------------------

    def activation_state(self, unit_id: str) -> str:
        with self._lock:
            if unit_id not in self._units:
                raise UnitNotFoundError(unit_id)
            return "active-for-inference" if self._active[unit_id] else "dormant"

    @contextmanager
    def activated(self, unit_ids: Iterable[str]) -> Iterator[None]:
        """Hold units active-for-inference for the duration of a query."""
        ids = list(unit_ids)
        with self._lock:
            for uid in ids:
                self._active[uid] += 1
        try:
            yield
        finally:
            with self._lock:
                for uid in ids:
                    self._active[uid] -= 1
                    if self._active[uid] <= 0:
                        del self._active[uid]
