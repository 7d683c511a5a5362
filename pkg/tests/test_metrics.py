from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from epimem.evalkit.metrics import bleu1, f1, is_abstention, normalize_tokens

word = st.text(alphabet="abcdefghij", min_size=1, max_size=6)
phrase = st.lists(word, min_size=1, max_size=8).map(" ".join)


@pytest.mark.parametrize(
    "pred, gold, want",
    [
        ("Sweden", "Sweden", 1.0),
        ("the Sweden", "sweden", 1.0),
        ("kitchen table", "red table", 0.5),
        ("", "", 1.0),
        ("", "Sweden", 0.0),
        ("Sweden!", "sweden", 1.0),
    ],
)
def test_f1_examples(pred, gold, want):
    assert f1(pred, gold) == pytest.approx(want, abs=1e-9)


@pytest.mark.parametrize(
    "pred, gold, want",
    [
        ("kitchen table", "kitchen table", 1.0),
        ("a a a", "a b", 1 / 3),
        ("a", "a b c d", math.exp(1 - 4)),
        ("", "a", 0.0),
    ],
)
def test_bleu1_examples(pred, gold, want):
    assert bleu1(pred, gold) == pytest.approx(want, abs=1e-9)


def test_bp_value():
    assert bleu1("a", "a b c d") == pytest.approx(0.049787068367863944, abs=1e-12)


def test_max_over_golds():
    assert f1("Lisbon", ["Porto", "Lisbon"]) == 1.0
    assert bleu1("Lisbon", ["Porto", "Lisbon"]) == 1.0


def test_normalizer():
    assert normalize_tokens("The Red-Key, an Item!") == ["red", "key", "item"]
    assert normalize_tokens("The Red-Key", drop_articles=False) == ["the", "red", "key"]


def test_abstention_equivalence():
    assert is_abstention("The information is not mentioned in the memory.")
    assert f1("The information is not mentioned in the memory.", "not mentioned") == 1.0
    assert bleu1("That is unknown.", "not mentioned") == 1.0
    assert f1("Blue", "not mentioned") == 0.0
    assert not is_abstention("Sweden")


@given(phrase)
def test_identity_is_one(x):
    assert f1(x, x) == 1.0
    assert bleu1(x, x) == 1.0


@given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=5), st.lists(st.sampled_from("vwxyz"), min_size=1, max_size=5))
def test_disjoint_is_zero(a, b):
    assert f1(" ".join(a), " ".join(b)) == 0.0
    assert bleu1(" ".join(a), " ".join(b)) == 0.0


@given(phrase, phrase)
def test_bounds_and_casing(a, b):
    for metric in (f1, bleu1):
        v = metric(a, b)
        assert 0.0 <= v <= 1.0
        assert metric(a.upper(), b) == v
    assert f1("the " + a, b) == f1(a, "the " + b) == f1(a, b)
