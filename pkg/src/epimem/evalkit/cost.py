"""Token accounting and the normalized small/large cost."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from epimem.backend.base import Role, TokenUsage

DEFAULT_LARGE_RATIO = 10


@dataclass
class CostLedger:
    """Per-query token totals.  ``t_small``/``t_large`` count prompt + completion."""

    t_small: int = 0
    t_large: int = 0
    ratio_large: int = DEFAULT_LARGE_RATIO
    calls_small: int = 0
    calls_large: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    usages: list[TokenUsage] = field(default_factory=list, repr=False)
    failures: list[str] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, usage: TokenUsage) -> None:
        with self._lock:
            self.usages.append(usage)
            if usage.role is Role.SMALL:
                self.t_small += usage.total
                self.calls_small += 1
            else:
                self.t_large += usage.total
                self.calls_large += 1

    def record_failure(self, what: str) -> None:
        with self._lock:
            self.failures.append(what)

    @property
    def normalized_cost(self) -> int:
        return normalized_cost(self)

    def __add__(self, other: "CostLedger") -> "CostLedger":
        if self.ratio_large != other.ratio_large:
            raise ValueError("cannot add ledgers with different cost ratios")
        return CostLedger(
            t_small=self.t_small + other.t_small,
            t_large=self.t_large + other.t_large,
            ratio_large=self.ratio_large,
            calls_small=self.calls_small + other.calls_small,
            calls_large=self.calls_large + other.calls_large,
            cache_hits=self.cache_hits + other.cache_hits,
            cache_misses=self.cache_misses + other.cache_misses,
            usages=self.usages + other.usages,
            failures=self.failures + other.failures,
        )

    def to_dict(self) -> dict:
        return {
            "T_S": self.t_small,
            "T_L": self.t_large,
            "normalized_cost": self.normalized_cost,
            "calls_small": self.calls_small,
            "calls_large": self.calls_large,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "failures": list(self.failures),
        }


def normalized_cost(ledger: CostLedger | None = None, *, t_small: int | None = None, t_large: int | None = None,
                    ratio_large: int = DEFAULT_LARGE_RATIO) -> int:
    """``ratio_large * T_L + T_S``; integer-exact."""
    if ledger is not None:
        return ledger.ratio_large * ledger.t_large + ledger.t_small
    return ratio_large * int(t_large or 0) + int(t_small or 0)
