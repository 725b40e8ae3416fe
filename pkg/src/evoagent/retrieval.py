"""Deterministic TF-IDF cosine ranking over small token corpora.

No external embedding dependency: scores depend only on the documents and
the query, so retrieval order is reproducible across runs. Weights use the
smoothed inverse document frequency ln((1 + N) / (1 + df)) + 1 so that a
one-document corpus still produces nonzero vectors.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable, Sequence

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _idf(df: int, n_docs: int) -> float:
    return math.log((1 + n_docs) / (1 + df)) + 1.0


def _vector(tokens: Iterable[str], idf: dict[str, float], n_docs: int) -> dict[str, float]:
    counts = Counter(tokens)
    return {t: c * idf.get(t, _idf(0, n_docs)) for t, c in counts.items()}


def _cosine(a: dict[str, float], b: dict[str, float]) -> float:
    if not a or not b:
        return 0.0
    dot = sum(w * b[t] for t, w in a.items() if t in b)
    norm = math.sqrt(sum(w * w for w in a.values())) * math.sqrt(sum(w * w for w in b.values()))
    if norm == 0.0:
        return 0.0
    return min(1.0, dot / norm)


def rank(query: str, docs: Sequence[tuple[str, list[str]]]) -> list[tuple[str, float]]:
    """Score documents against a query string.

    ``docs`` is a sequence of (key, token list); returns (key, score) pairs
    in input order — callers apply their own tie-breaking sort.
    """
    n_docs = len(docs)
    df: Counter = Counter()
    for _, tokens in docs:
        df.update(set(tokens))
    idf = {t: _idf(count, n_docs) for t, count in df.items()}
    query_vec = _vector(tokenize(query), idf, n_docs)
    return [(key, _cosine(query_vec, _vector(tokens, idf, n_docs))) for key, tokens in docs]
