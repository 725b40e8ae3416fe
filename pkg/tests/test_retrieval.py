"""TF-IDF cosine ranking against hand-computed values.

The partial-overlap constant below is derived on paper from the weighting
definition ln((1+N)/(1+df)) + 1:

  docs d1=[a,b], d2=[b,c], query "a b", N=2
  df(a)=df(c)=1 -> w = ln(3/2)+1 = 1.4054651...; df(b)=2 -> weight 1
  q = {a:w, b:1} = d1 exactly -> cos(q,d1) = 1
  cos(q,d2) = 1 / (1 + w^2) = 0.3360969...
"""
from __future__ import annotations

import pytest

from evoagent.retrieval import rank, tokenize

HALF_OVERLAP_COS = 0.33609692727625745


def test_tokenize_lowercases_and_splits_on_non_alnum():
    assert tokenize("Count the SNP-variants in BRCA1!") == [
        "count", "the", "snp", "variants", "in", "brca1",
    ]
    assert tokenize("") == []
    assert tokenize("...") == []


def test_identical_doc_scores_one():
    scores = dict(rank("a b", [("d1", ["a", "b"])]))
    assert scores["d1"] == pytest.approx(1.0)


def test_proportional_term_counts_score_one():
    # doubling every tf leaves the cosine unchanged
    scores = dict(rank("a b", [("d1", ["a", "a", "b", "b"])]))
    assert scores["d1"] == pytest.approx(1.0)


def test_disjoint_doc_scores_zero():
    scores = dict(rank("a b", [("d1", ["a", "b"]), ("d2", ["c", "d"])]))
    assert scores["d1"] == pytest.approx(1.0)
    assert scores["d2"] == 0.0


def test_half_overlap_matches_hand_computation():
    scores = dict(rank("a b", [("d1", ["a", "b"]), ("d2", ["b", "c"])]))
    assert scores["d1"] == pytest.approx(1.0)
    assert scores["d2"] == pytest.approx(HALF_OVERLAP_COS, abs=1e-12)


def test_three_doc_ordering():
    scores = dict(
        rank(
            "count variants",
            [
                ("exact", ["count", "variants"]),
                ("partial", ["count", "cells"]),
                ("unrelated", ["fold", "proteins"]),
            ],
        )
    )
    assert scores["unrelated"] == 0.0
    assert scores["exact"] == pytest.approx(1.0)
    assert 0.0 < scores["partial"] < scores["exact"]


def test_empty_query_scores_all_zero():
    scores = dict(rank("", [("d1", ["a"]), ("d2", ["b"])]))
    assert scores == {"d1": 0.0, "d2": 0.0}


def test_scores_bounded_to_unit_interval():
    docs = [("d", ["x", "x", "y"] * 10)]
    for query in ("x", "x x y", "x y z", "q"):
        for _, score in rank(query, docs):
            assert 0.0 <= score <= 1.0


def test_rank_preserves_input_order():
    docs = [("b", ["t"]), ("a", ["t"])]
    assert [key for key, _ in rank("t", docs)] == ["b", "a"]
