"""Run a dataset through an engine and emit per-example lines plus a summary."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from epimem.evalkit.cost import CostLedger
from epimem.evalkit.datasets import CATEGORIES, Dataset, QAExample
from epimem.evalkit.metrics import bleu1, f1
from epimem.units import unit_sort_key

if TYPE_CHECKING:
    from epimem.engine import MemoryEngine


class EvaluationError(ValueError):
    pass


def _r(x: float) -> float:
    return round(float(x), 6)


@dataclass
class ExampleResult:
    example_id: str
    category: str
    question: str
    prediction: str
    answers: tuple[str, ...]
    f1: float
    bleu1: float
    ledger: CostLedger
    activated: list[str]
    recall: float | None = None
    termination: str | None = None

    def to_dict(self) -> dict:
        ledger = self.ledger.to_dict()
        ledger.pop("failures")
        return {
            "example_id": self.example_id,
            "category": self.category,
            "question": self.question,
            "prediction": self.prediction,
            "answers": list(self.answers),
            "f1": _r(self.f1),
            "bleu1": _r(self.bleu1),
            "recall": None if self.recall is None else _r(self.recall),
            "activated": self.activated,
            "termination": self.termination,
            "ledger": ledger,
        }


@dataclass
class Report:
    mode: str
    results: list[ExampleResult] = field(default_factory=list)

    def _slice(self, rows: list[ExampleResult]) -> dict:
        n = len(rows)
        if not n:
            return {"n": 0, "f1": 0.0, "bleu1": 0.0, "recall": None,
                    "mean_T_S": 0.0, "mean_T_L": 0.0, "mean_cost": 0.0}
        recalls = [r.recall for r in rows if r.recall is not None]
        return {
            "n": n,
            "f1": _r(sum(r.f1 for r in rows) / n),
            "bleu1": _r(sum(r.bleu1 for r in rows) / n),
            "recall": _r(sum(recalls) / len(recalls)) if recalls else None,
            "mean_T_S": _r(sum(r.ledger.t_small for r in rows) / n),
            "mean_T_L": _r(sum(r.ledger.t_large for r in rows) / n),
            "mean_cost": _r(sum(r.ledger.normalized_cost for r in rows) / n),
        }

    def summary(self) -> dict:
        per_cat = {
            cat: self._slice([r for r in self.results if r.category == cat])
            for cat in CATEGORIES
            if any(r.category == cat for r in self.results)
        }
        return {"mode": self.mode, "overall": self._slice(self.results), "categories": per_cat}

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) for r in self.results]
        lines.append(json.dumps({"summary": self.summary()}, sort_keys=True, ensure_ascii=False))
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    def table(self) -> str:
        summary = self.summary()
        rows = [("overall", summary["overall"])] + list(summary["categories"].items())
        header = ("slice", "n", "F1", "BLEU-1", "recall", "T_S", "T_L", "cost")
        body = [
            (
                name,
                str(s["n"]),
                f"{100 * s['f1']:.2f}",
                f"{100 * s['bleu1']:.2f}",
                "-" if s["recall"] is None else f"{s['recall']:.3f}",
                f"{s['mean_T_S']:.1f}",
                f"{s['mean_T_L']:.1f}",
                f"{s['mean_cost']:.1f}",
            )
            for name, s in rows
        ]
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
        fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
        rule = "  ".join("-" * w for w in widths)
        return "\n".join([fmt(header), rule, *map(fmt, body)])


def routing_recall(engine: "MemoryEngine", activated: list[str], supporting: tuple[str, ...]) -> float | None:
    """Share of supporting source ids covered by at least one activated unit."""
    if not supporting:
        return None
    covered: set[str] = set()
    for uid in activated:
        covered.update(engine.archive.load(uid).source_ids)
    return sum(1 for s in supporting if s in covered) / len(supporting)


def ingest_dataset(engine: "MemoryEngine", dataset: Dataset) -> None:
    for stream_id, stream in sorted(dataset.streams.items()):
        engine.ingest(stream_id, stream)


def evaluate(
    engine: "MemoryEngine",
    dataset: Dataset,
    mode: str = "direct",
    *,
    ingest: bool = True,
    workers: int = 1,
    tau: int | None = None,
    max_iterations: int | None = None,
) -> Report:
    """Ask every example and score it; rows are ordered by example id."""
    missing = sorted({e.stream_id for e in dataset.examples} - set(dataset.streams))
    if missing:
        raise EvaluationError(f"examples refer to unknown streams: {missing}")
    if ingest:
        ingest_dataset(engine, dataset)
    known = {uid.rsplit(":", 1)[0] for uid in engine.archive.unit_ids()}
    absent = sorted({e.stream_id for e in dataset.examples} - known)
    if absent:
        raise EvaluationError(f"engine archive holds no units for streams: {absent}")

    def run(example: QAExample) -> ExampleResult:
        result = engine.ask(
            example.question, mode=mode, stream_id=example.stream_id, tau=tau, max_iterations=max_iterations
        )
        if result.trace is not None and result.trace.steps:
            activated = sorted(result.trace.seen_units[-1], key=unit_sort_key)
        else:
            activated = list(result.activation.unit_ids) if result.activation else []
        prediction = result.answer.answer_core
        return ExampleResult(
            example_id=example.example_id,
            category=example.category,
            question=example.question,
            prediction=prediction,
            answers=example.answers,
            f1=f1(prediction, example.answers),
            bleu1=bleu1(prediction, example.answers),
            ledger=result.ledger,
            activated=activated,
            recall=routing_recall(engine, activated, example.supporting_ids),
            termination=result.trace.termination.value if result.trace and result.trace.termination else None,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, dataset.examples))
    else:
        results = [run(e) for e in dataset.examples]
    results.sort(key=lambda r: r.example_id)
    return Report(mode, results)
