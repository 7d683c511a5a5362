"""Assistant fan-out, master aggregation and the iterative refine-and-query loop."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from epimem import prompts
from epimem.agents.parsing import is_verbatim, parse_aggregate, parse_plan, parse_retrieval
from epimem.analyzer import normalize_whitespace
from epimem.archive import Archive, ArchiveSnapshot
from epimem.backend.base import BackendError, CompletionRequest, LanguageBackend, TokenUsage
from epimem.backend.cache import PrefixStateCache, fingerprint
from epimem.evalkit.cost import CostLedger
from epimem.router import ActivationSet, Router
from epimem.units import MemoryUnit, unit_sort_key

logger = logging.getLogger(__name__)


class AgentError(Exception):
    pass


class AllAssistantsFailedError(AgentError):
    def __init__(self, message: str, ledger: CostLedger) -> None:
        super().__init__(message)
        self.ledger = ledger


class InactiveUnitError(AgentError):
    pass


@dataclass
class Evidence:
    unit_id: str
    query: str
    response_type: str | None
    memory_segments: list[str]
    reasoning: str
    raw_completion: str
    token_usage: TokenUsage | None
    degraded: bool = False
    non_verbatim: list[str] = field(default_factory=list)
    time_range: tuple[str | None, str | None] = (None, None)

    @property
    def verbatim(self) -> bool:
        return not self.non_verbatim


@dataclass
class MasterAnswer:
    answer_core: str
    evidence_quotes: list[tuple[str | None, str]]
    logic_trace: str
    raw_completion: str
    token_usage: TokenUsage | None
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "answer_core": self.answer_core,
            "evidence_quotes": [{"timestamp": ts, "quote": q} for ts, q in self.evidence_quotes],
            "logic_trace": self.logic_trace,
            "degraded": self.degraded,
        }


class Termination(str, Enum):
    ANSWERED = "answered"
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class TraceStep:
    subquery: str
    activated: list[str]
    evidence: list[Evidence]
    state: MasterAnswer | None
    new_units: list[str]
    new_quotes: int


@dataclass
class ReasoningTrace:
    initial_query: str
    steps: list[TraceStep] = field(default_factory=list)
    termination: Termination | None = None

    @property
    def seen_units(self) -> list[set[str]]:
        """Cumulative set of activated unit ids after each step."""
        out, acc = [], set()
        for step in self.steps:
            acc |= set(step.activated)
            out.append(set(acc))
        return out


@dataclass
class Answer:
    answer: MasterAnswer
    ledger: CostLedger
    activation: ActivationSet | None
    evidence: list[Evidence]
    trace: ReasoningTrace | None = None


def _with_prefix(request: CompletionRequest, handle) -> CompletionRequest:
    return CompletionRequest(
        request.system, request.user, request.model, request.max_tokens,
        request.temperature, request.metadata, handle,
    )


def assistant_infer(
    query: str,
    unit: MemoryUnit,
    backend: LanguageBackend,
    cache: PrefixStateCache | None = None,
    ledger: CostLedger | None = None,
    archive: Archive | None = None,
) -> Evidence:
    """Local reasoning of one assistant over its raw context."""
    if archive is not None and archive.activation_state(unit.unit_id) != "active-for-inference":
        raise InactiveUnitError(f"unit {unit.unit_id} is dormant")
    request = CompletionRequest(
        system=prompts.memory_system_prompt(unit.text),
        user=query,
        metadata={"task": "assist", "query": query, "unit_id": unit.unit_id, "context": unit.text},
    )
    if cache is not None:
        key = fingerprint(unit.text, prompts.MEMORY_AGENT_PROMPT)
        handle, hit = cache.get_or_build(key, lambda: backend.prefix_handle(key))
        request = _with_prefix(request, handle)
        if ledger is not None:
            with ledger._lock:
                if hit:
                    ledger.cache_hits += 1
                else:
                    ledger.cache_misses += 1
    completion = backend.complete(request)
    if ledger is not None:
        ledger.record(completion.usage)
    parsed = parse_retrieval(completion.text)
    if not parsed.ok:
        return Evidence(
            unit_id=unit.unit_id,
            query=query,
            response_type=None,
            memory_segments=[],
            reasoning=completion.text,
            raw_completion=completion.text,
            token_usage=completion.usage,
            degraded=True,
            time_range=unit.time_range,
        )
    non_verbatim = [s for s in parsed.memory_segments if not is_verbatim(s, unit.text)]
    if non_verbatim:
        logger.info("unit %s: %d quote(s) are not verbatim", unit.unit_id, len(non_verbatim))
    return Evidence(
        unit_id=unit.unit_id,
        query=query,
        response_type=parsed.response_type,
        memory_segments=parsed.memory_segments,
        reasoning=parsed.reasoning or "",
        raw_completion=completion.text,
        token_usage=completion.usage,
        non_verbatim=non_verbatim,
        time_range=unit.time_range,
    )


def serialize_evidence(evidence: Sequence[Evidence]) -> str:
    """Blocks in chronological unit order, each headed by unit id and time range."""
    ordered = sorted(evidence, key=lambda e: (unit_sort_key(e.unit_id), e.query))
    if not ordered:
        return "(no memory blocks were activated for this query)"
    blocks = []
    for n, ev in enumerate(ordered, start=1):
        first, last = ev.time_range
        when = f"{first} to {last}" if first and last and first != last else (first or "time unknown")
        head = f"> *Block {n}:* unit {ev.unit_id} ({when})"
        if ev.memory_segments:
            text = "\n".join(f">   {s}" for s in ev.memory_segments)
        else:
            text = ">   (no verbatim segments)"
        flag = " [quotes not verified verbatim]" if ev.non_verbatim else ""
        inference = normalize_whitespace(ev.reasoning) or "(none)"
        blocks.append(f"{head}{flag}\n> Input Text:\n{text}\n> Local Inference: {inference}")
    return "\n\n".join(blocks)


def master_aggregate(
    query: str,
    evidence: Sequence[Evidence],
    backend: LanguageBackend,
    ledger: CostLedger | None = None,
) -> MasterAnswer:
    ordered = sorted(evidence, key=lambda e: (unit_sort_key(e.unit_id), e.query))
    quotes = [s for ev in ordered for s in ev.memory_segments]
    request = CompletionRequest(
        system=prompts.master_system_prompt(query, serialize_evidence(ordered)),
        user=query,
        metadata={
            "task": "aggregate",
            "query": query,
            "quotes": quotes,
            "unit_ids": [e.unit_id for e in ordered],
        },
    )
    completion = backend.complete(request)
    if ledger is not None:
        ledger.record(completion.usage)
    parsed = parse_aggregate(completion.text)
    if not parsed.ok:
        return MasterAnswer(
            answer_core=normalize_whitespace(completion.text),
            evidence_quotes=parsed.evidence_quotes,
            logic_trace=parsed.logic_trace,
            raw_completion=completion.text,
            token_usage=completion.usage,
            degraded=True,
        )
    return MasterAnswer(
        answer_core=parsed.answer_core or "",
        evidence_quotes=parsed.evidence_quotes,
        logic_trace=parsed.logic_trace,
        raw_completion=completion.text,
        token_usage=completion.usage,
    )


class Orchestrator:
    """Routes a query, fans it out to assistants, and lets the master answer."""

    def __init__(
        self,
        archive: Archive,
        router: Router,
        small: LanguageBackend,
        large: LanguageBackend,
        *,
        cache: PrefixStateCache | None = None,
        parallelism: int = 8,
        max_iterations: int = 3,
        cost_ratio: int = 10,
    ) -> None:
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.archive = archive
        self.router = router
        self.small = small
        self.large = large
        self.cache = cache
        self.parallelism = parallelism
        self.max_iterations = max_iterations
        self.cost_ratio = cost_ratio

    def _snapshot(self, stream_id: str | None) -> ArchiveSnapshot:
        return self.archive.snapshot(stream_id)

    def _fan_out(self, query: str, unit_ids: Sequence[str], snap: ArchiveSnapshot, ledger: CostLedger) -> list[Evidence]:
        by_id = {u.unit_id: u for u in snap.units}
        units = [by_id[uid] for uid in unit_ids]
        if not units:
            return []

        def run(unit: MemoryUnit) -> Evidence | None:
            try:
                return assistant_infer(query, unit, self.small, self.cache, ledger, self.archive)
            except BackendError as exc:
                logger.warning("assistant for %s failed: %s", unit.unit_id, exc)
                ledger.record_failure(f"{unit.unit_id}: {exc}")
                return None

        with self.archive.activated(unit_ids):
            with ThreadPoolExecutor(max_workers=min(self.parallelism, len(units))) as pool:
                results = list(pool.map(run, units))
        evidence = [e for e in results if e is not None]
        if not evidence:
            raise AllAssistantsFailedError(f"all {len(units)} assistants failed", ledger)
        return sorted(evidence, key=lambda e: unit_sort_key(e.unit_id))

    def answer_direct(
        self,
        query: str,
        *,
        tau: int | None = None,
        stream_id: str | None = None,
        disabled: Sequence[str] = (),
    ) -> Answer:
        ledger = CostLedger(ratio_large=self.cost_ratio)
        snap = self._snapshot(stream_id)
        activation = self.router.activate(self.router.make_query(query, tau=tau), snap, disabled=disabled)
        evidence = self._fan_out(query, activation.unit_ids, snap, ledger)
        answer = master_aggregate(query, evidence, self.large, ledger)
        return Answer(answer, ledger, activation, evidence)

    def _plan(self, query: str, state: MasterAnswer, ledger: CostLedger):
        state_text = state.answer_core
        if state.evidence_quotes:
            state_text += "\nEvidence:\n" + "\n".join(f"- {q}" for _, q in state.evidence_quotes)
        request = CompletionRequest(
            system=prompts.planner_system_prompt(query, state_text),
            user=query,
            metadata={"task": "plan", "query": query, "state": state_text, "answer": state.answer_core},
        )
        completion = self.large.complete(request)
        ledger.record(completion.usage)
        return parse_plan(completion.text)

    def answer_iterative(
        self,
        query: str,
        *,
        max_iterations: int | None = None,
        tau: int | None = None,
        stream_id: str | None = None,
    ) -> Answer:
        t_max = self.max_iterations if max_iterations is None else max_iterations
        if t_max < 1:
            raise ValueError("max_iterations must be >= 1")
        ledger = CostLedger(ratio_large=self.cost_ratio)
        trace = ReasoningTrace(query)
        seen_units: set[str] = set()
        seen_quotes: set[str] = set()
        pool: list[Evidence] = []
        state: MasterAnswer | None = None
        activation = None
        subquery = query
        for t in range(1, t_max + 1):
            snap = self._snapshot(stream_id)
            activation = self.router.activate(self.router.make_query(subquery, tau=tau), snap)
            evidence = self._fan_out(subquery, activation.unit_ids, snap, ledger)
            quotes = {
                normalize_whitespace(s) for e in evidence if not e.degraded for s in e.memory_segments
            }
            new_units = [u for u in activation.unit_ids if u not in seen_units]
            new_quotes = quotes - seen_quotes
            seen_units.update(activation.unit_ids)
            seen_quotes |= quotes
            if t > 1 and not new_units and not new_quotes:
                trace.steps.append(TraceStep(subquery, activation.unit_ids, evidence, state, [], 0))
                trace.termination = Termination.CONVERGED
                break
            pool.extend(evidence)
            state = master_aggregate(query, pool, self.large, ledger)
            trace.steps.append(
                TraceStep(subquery, activation.unit_ids, evidence, state, new_units, len(new_quotes))
            )
            plan = self._plan(query, state, ledger)
            if plan.final:
                trace.termination = Termination.ANSWERED
                break
            if t == t_max:
                trace.termination = Termination.BUDGET_EXHAUSTED
                break
            subquery = plan.subquery or query
        assert state is not None
        return Answer(state, ledger, activation, pool, trace)
