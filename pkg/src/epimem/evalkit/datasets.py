"""Benchmark loaders.

Dialogue schema (one object, a JSON array of objects, or JSON lines)::

    {"conversation_id": str,
     "sessions": [{"session_id": str, "timestamp": str,
                   "turns": [{"speaker": str, "text": str, "dia_id"?: str}]}],
     "qa": [{"question": str, "answers": [str], "category": str}]}

Streaming-docs schema (same container rules)::

    {"docs": [{"doc_id": str, "title": str, "text": str}],
     "qa": [{"question": str, "answers": [str], "supporting_doc_ids": [str]}]}
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from epimem.segmenter import Record, TokenStream

logger = logging.getLogger(__name__)

CATEGORIES = ("single_hop", "multi_hop", "temporal", "open_domain", "adversarial")

_CATEGORY_ALIASES = {
    "single_hop": "single_hop",
    "singlehop": "single_hop",
    "multi_hop": "multi_hop",
    "multihop": "multi_hop",
    "temporal": "temporal",
    "open_domain": "open_domain",
    "opendomain": "open_domain",
    "open_ended": "open_domain",
    "adversarial": "adversarial",
}

_TIME_FORMATS = (
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d",
    "%I:%M %p on %d %B, %Y",
    "%I:%M %p on %d %b, %Y",
)


class DatasetError(ValueError):
    pass


class TimestampOrderWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QAExample:
    example_id: str
    question: str
    answers: tuple[str, ...]
    category: str
    stream_id: str
    supporting_ids: tuple[str, ...] = ()


@dataclass
class Dataset:
    kind: str
    streams: dict[str, TokenStream]
    examples: list[QAExample] = field(default_factory=list)

    def filter(self, categories) -> "Dataset":
        wanted = {normalize_category(c) for c in categories}
        return Dataset(self.kind, self.streams, [e for e in self.examples if e.category in wanted])


def normalize_category(value) -> str:
    key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
    if key not in _CATEGORY_ALIASES:
        raise DatasetError(f"unknown category {value!r}; expected one of {CATEGORIES}")
    return _CATEGORY_ALIASES[key]


def parse_timestamp(value: str) -> datetime | None:
    for fmt in _TIME_FORMATS:
        try:
            return datetime.strptime(value.strip(), fmt)
        except ValueError:
            continue
    try:
        return datetime.fromisoformat(value.strip())
    except ValueError:
        return None


def read_objects(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if not raw.strip():
        raise DatasetError(f"{path} is empty")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError:
        data = []
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                data.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    objects = data if isinstance(data, list) else [data]
    for i, obj in enumerate(objects):
        if not isinstance(obj, dict):
            raise DatasetError(f"{path}: record {i} is not an object")
    return objects


def _require(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise DatasetError(f"{where}: missing field {key!r}")
    if not isinstance(obj[key], kind):
        raise DatasetError(f"{where}: field {key!r} must be {kind.__name__}")
    return obj[key]


def load_dialogue_dataset(path: str | Path) -> Dataset:
    streams: dict[str, TokenStream] = {}
    examples: list[QAExample] = []
    for n, conv in enumerate(read_objects(path)):
        where = f"conversation #{n}"
        cid = _require(conv, "conversation_id", str, where)
        where = f"conversation {cid!r}"
        if cid in streams:
            raise DatasetError(f"{where}: duplicate conversation_id")
        records: list[tuple[Record, str]] = []
        last_time: datetime | None = None
        for s_idx, sess in enumerate(_require(conv, "sessions", list, where)):
            s_where = f"{where} session #{s_idx}"
            if not isinstance(sess, dict):
                raise DatasetError(f"{s_where}: not an object")
            sid = _require(sess, "session_id", str, s_where)
            stamp = _require(sess, "timestamp", str, s_where)
            parsed = parse_timestamp(stamp)
            if parsed is not None and last_time is not None and parsed < last_time:
                msg = f"{s_where} ({stamp}) is earlier than the previous session; order kept as given"
                logger.warning(msg)
                warnings.warn(msg, TimestampOrderWarning, stacklevel=2)
            last_time = parsed or last_time
            for t_idx, turn in enumerate(_require(sess, "turns", list, s_where)):
                t_where = f"{s_where} turn #{t_idx}"
                if not isinstance(turn, dict):
                    raise DatasetError(f"{t_where}: not an object")
                speaker = _require(turn, "speaker", str, t_where)
                text = _require(turn, "text", str, t_where)
                rec = Record(
                    ordinal=len(records),
                    speaker=speaker,
                    timestamp=stamp,
                    source_id=turn.get("dia_id"),
                    session_id=sid,
                )
                records.append((rec, text))
        streams[cid] = TokenStream.from_records(records)
        for q_idx, qa in enumerate(conv.get("qa", [])):
            q_where = f"{where} qa #{q_idx}"
            if not isinstance(qa, dict):
                raise DatasetError(f"{q_where}: not an object")
            answers = _require(qa, "answers", list, q_where)
            try:
                category = normalize_category(_require(qa, "category", str, q_where))
            except DatasetError as exc:
                raise DatasetError(f"{q_where}: {exc}") from None
            examples.append(
                QAExample(
                    example_id=f"{cid}:q{q_idx:04d}",
                    question=_require(qa, "question", str, q_where),
                    answers=tuple(str(a) for a in answers),
                    category=category,
                    stream_id=cid,
                    supporting_ids=tuple(qa.get("evidence", ())),
                )
            )
    return Dataset("dialogue", streams, examples)


def load_streaming_docs(path: str | Path, scale: int, stream_id: str = "docs") -> Dataset:
    if scale < 1:
        raise DatasetError("scale must be a positive document count")
    objects = read_objects(path)
    docs: list[dict] = []
    qas: list[dict] = []
    for obj in objects:
        docs.extend(obj.get("docs", []))
        qas.extend(obj.get("qa", []))
    if len(docs) < scale:
        raise DatasetError(f"{path}: {len(docs)} documents available, {scale} requested")
    records: list[tuple[Record, str]] = []
    selected: set[str] = set()
    for i, doc in enumerate(docs[:scale]):
        where = f"doc #{i}"
        if not isinstance(doc, dict):
            raise DatasetError(f"{where}: not an object")
        doc_id = _require(doc, "doc_id", str, where)
        selected.add(doc_id)
        rec = Record(ordinal=i, source_id=doc_id, title=doc.get("title") or None)
        records.append((rec, _require(doc, "text", str, where)))
    examples = []
    for q_idx, qa in enumerate(qas):
        where = f"qa #{q_idx}"
        support = tuple(_require(qa, "supporting_doc_ids", list, where))
        if not set(support) <= selected:
            continue
        examples.append(
            QAExample(
                example_id=f"{stream_id}:q{q_idx:04d}",
                question=_require(qa, "question", str, where),
                answers=tuple(str(a) for a in _require(qa, "answers", list, where)),
                category=normalize_category(qa.get("category", "multi_hop")),
                stream_id=stream_id,
                supporting_ids=support,
            )
        )
    return Dataset("docs", {stream_id: TokenStream.from_records(records)}, examples)
