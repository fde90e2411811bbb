"""Ranking evaluation: Precision@k, NDCG@k, P@1, and whole-dataset means.

NDCG uses the LETOR convention: gain 2^rel - 1 and discount 1/log2(i+1) at
position i (1-based).  On binary labels this coincides with gain = rel.
Ties in scores are broken lexicographically by document id so every metric
value is reproducible.  Queries with no relevant document are excluded from
dataset means (their NDCG is undefined) and reported as skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import Dataset, Document, EmptyPoolError, Query
from .scorers import Scorer
from ._util import write_csv


@dataclass(frozen=True)
class RankedList:
    query: str
    docs: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(set(self.docs)) != len(self.docs):
            raise ValueError("ranked list contains duplicate documents")
        if any(a < b for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("ranked list scores must be non-increasing")


def rank(scorer: Scorer, query: Query | None, pool: Sequence[Document]) -> RankedList:
    """Sort a pool by score descending; ties broken by ascending doc id."""
    if len(pool) == 0:
        raise EmptyPoolError("cannot rank an empty pool")
    scores = scorer.score_many(query, pool)
    order = sorted(range(len(pool)), key=lambda i: (-scores[i], pool[i].id))
    qid = query.id if query is not None else ""
    return RankedList(
        query=qid,
        docs=tuple(pool[i].id for i in order),
        scores=tuple(float(scores[i]) for i in order),
    )


def precision_at_k(ranked: RankedList, relevance: Mapping[str, int], k: int) -> float:
    """(# relevant in the top min(k, len)) / k.  Denominator is always k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for d in ranked.docs[:k] if relevance.get(d, 0) > 0)
    return hits / k


def ndcg_at_k(ranked: RankedList, relevance: Mapping[str, int], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    grades = [relevance.get(d, 0) for d in ranked.docs]
    if not any(g > 0 for g in grades):
        raise ValueError(f"query {ranked.query!r} has no relevant document")
    dcg = sum(
        (2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(grades[:k])
    )
    ideal = sorted(grades, reverse=True)
    idcg = sum(
        (2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(ideal[:k])
    )
    return dcg / idcg


def p_at_1(ranked: RankedList, relevance: Mapping[str, int]) -> float:
    """1.0 iff the top-ranked document is relevant."""
    if not ranked.docs:
        raise ValueError("ranked list is empty")
    return 1.0 if relevance.get(ranked.docs[0], 0) > 0 else 0.0


def _parse_metric(name: str):
    name = name.strip().lower()
    if name == "p@1":
        return ("p", 1)
    kind, _, k = name.partition("@")
    if kind in ("p", "ndcg") and k.isdigit() and int(k) >= 1:
        return (kind, int(k))
    raise ValueError(f"unknown metric {name!r}")


def compute_metric(name: str, ranked: RankedList, relevance: Mapping[str, int]) -> float:
    kind, k = _parse_metric(name)
    if kind == "p":
        return precision_at_k(ranked, relevance, k)
    return ndcg_at_k(ranked, relevance, k)


@dataclass(frozen=True)
class EvalReport:
    values: dict[str, float]
    queries_counted: int
    queries_skipped: int


def evaluate_model(scorer: Scorer, dataset: Dataset,
                   metric_names: Sequence[str] = ("p@5", "ndcg@5")) -> EvalReport:
    """Per-query metrics averaged over queries that have >= 1 relevant doc."""
    names = [n.strip().lower() for n in metric_names]
    for n in names:
        _parse_metric(n)
    sums = {n: 0.0 for n in names}
    counted = skipped = 0
    for q in dataset.queries:
        relevance = dataset.relevance_map(q.id)
        if not any(g > 0 for g in relevance.values()):
            skipped += 1
            continue
        ranked = rank(scorer, q, dataset.pool(q.id))
        for n in names:
            sums[n] += compute_metric(n, ranked, relevance)
        counted += 1
    values = {n: (sums[n] / counted if counted else float("nan")) for n in names}
    return EvalReport(values=values, queries_counted=counted, queries_skipped=skipped)


def pairwise_accuracy(scorer: Scorer, dataset: Dataset) -> float:
    """Fraction of (more-relevant, less-relevant) pairs the scorer orders correctly."""
    correct = 0
    total = 0
    for q in dataset.queries:
        pool = dataset.pool(q.id)
        relevance = dataset.relevance_map(q.id)
        scores = scorer.score_many(q, pool)
        grades = [relevance.get(d.id, 0) for d in pool]
        for i in range(len(pool)):
            for j in range(len(pool)):
                if grades[i] > grades[j]:
                    total += 1
                    correct += scores[i] > scores[j]
    return correct / total if total else float("nan")


def write_eval_csv(reports: Mapping[str, EvalReport], path) -> None:
    """One row per (model, metric): model,metric,value,queries_counted,queries_skipped."""
    rows = []
    for model in sorted(reports):
        rep = reports[model]
        for metric in rep.values:
            rows.append(
                (model, metric, rep.values[metric], rep.queries_counted, rep.queries_skipped)
            )
    write_csv(path, ("model", "metric", "value", "queries_counted", "queries_skipped"), rows)
