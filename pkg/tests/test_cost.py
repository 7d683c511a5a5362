from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from epimem.backend.base import Role, TokenUsage
from epimem.evalkit.cost import CostLedger, normalized_cost

counts = st.integers(0, 10**7)


def test_table_rows():
    assert normalized_cost(t_small=2271, t_large=135) == 3621
    assert normalized_cost(t_small=0, t_large=16910) == 169100
    assert normalized_cost(t_small=0, t_large=0) == 0
    assert CostLedger(t_small=2271, t_large=135).normalized_cost == 3621


def test_ratio_is_configurable():
    assert CostLedger(t_small=1, t_large=1, ratio_large=4).normalized_cost == 5


@given(counts, counts, counts, counts)
def test_linearity(s1, l1, s2, l2):
    a, b = CostLedger(t_small=s1, t_large=l1), CostLedger(t_small=s2, t_large=l2)
    total = a + b
    assert (total.t_small, total.t_large) == (s1 + s2, l1 + l2)
    assert total.normalized_cost == a.normalized_cost + b.normalized_cost


@given(st.lists(st.tuples(counts, counts, st.sampled_from(list(Role))), max_size=30))
def test_record_conserves_usage(calls):
    ledger = CostLedger()
    for p, c, role in calls:
        ledger.record(TokenUsage(p, c, role))
    assert ledger.t_small == sum(p + c for p, c, r in calls if r is Role.SMALL)
    assert ledger.t_large == sum(p + c for p, c, r in calls if r is Role.LARGE)
    assert ledger.t_small + ledger.t_large == sum(u.total for u in ledger.usages)
    assert ledger.calls_small + ledger.calls_large == len(calls)
