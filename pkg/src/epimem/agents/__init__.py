from epimem.agents.orchestrator import (
    AllAssistantsFailedError,
    Answer,
    Evidence,
    MasterAnswer,
    Orchestrator,
    ReasoningTrace,
    Termination,
    TraceStep,
    assistant_infer,
    master_aggregate,
    serialize_evidence,
)

__all__ = [
    "AllAssistantsFailedError",
    "Answer",
    "Evidence",
    "MasterAnswer",
    "Orchestrator",
    "ReasoningTrace",
    "Termination",
    "TraceStep",
    "assistant_infer",
    "master_aggregate",
    "serialize_evidence",
]
