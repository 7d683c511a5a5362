from epimem.evalkit.cost import CostLedger, normalized_cost
from epimem.evalkit.datasets import (
    CATEGORIES,
    Dataset,
    DatasetError,
    QAExample,
    load_dialogue_dataset,
    load_streaming_docs,
)
from epimem.evalkit.metrics import bleu1, f1, is_abstention

__all__ = [
    "CATEGORIES",
    "CostLedger",
    "Dataset",
    "DatasetError",
    "QAExample",
    "bleu1",
    "f1",
    "is_abstention",
    "load_dialogue_dataset",
    "load_streaming_docs",
    "normalized_cost",
]
