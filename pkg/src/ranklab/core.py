"""Immutable domain model: queries, documents, relevance judgments, datasets.

A Dataset is a closed-pool retrieval problem: every query owns an explicit
candidate pool, and graded relevance judgments mark which pooled documents
are correct.  Ordering of queries and pools is lexicographic by id so that
every downstream run is reproducible from a seed alone.  Datasets are
immutable after construction and safe for concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

QueryId = str


class DatasetError(ValueError):
    """Base class for dataset construction and lookup failures."""


class DuplicateJudgmentError(DatasetError):
    pass


class JudgedDocNotInPoolError(DatasetError):
    pass


class FeatureDimensionError(DatasetError):
    pass


class UnknownQueryError(DatasetError):
    pass


class EmptyPoolError(DatasetError):
    pass


class DatasetKind(str, Enum):
    WEB_SEARCH = "web-search"
    RECOMMENDATION = "recommendation"
    QA = "qa"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Query:
    """A query; `tokens` is only populated for text (QA) tasks."""

    id: QueryId
    tokens: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.id:
            raise DatasetError("query id must be non-empty")


@dataclass(frozen=True, eq=False)
class Document:
    """A candidate document, represented by dense features, token ids, or both."""

    id: str
    features: np.ndarray | None = None
    tokens: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.id:
            raise DatasetError("document id must be non-empty")
        if self.features is None and self.tokens is None:
            raise DatasetError(f"document {self.id!r} needs features or tokens")
        if self.features is not None:
            arr = np.asarray(self.features, dtype=np.float64)
            if arr.ndim != 1:
                raise DatasetError(f"document {self.id!r} features must be a flat vector")
            object.__setattr__(self, "features", arr)
        if self.tokens is not None and len(self.tokens) == 0:
            raise DatasetError(f"document {self.id!r} has an empty token sequence")

    def __eq__(self, other):
        if not isinstance(other, Document):
            return NotImplemented
        if self.id != other.id or self.tokens != other.tokens:
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True)
class Judgment:
    """Graded relevance of one (query, document) pair; grade > 0 means correct."""

    query: QueryId
    doc: str
    relevance: int

    def __post_init__(self):
        if self.relevance < 0:
            raise DatasetError(
                f"judgment ({self.query!r},{self.doc!r}) has negative relevance"
            )


@dataclass(frozen=True, eq=False)
class Dataset:
    kind: DatasetKind
    queries: tuple[Query, ...]
    pools: Mapping[QueryId, tuple[Document, ...]]
    judgments: tuple[Judgment, ...]
    feature_dim: int | None
    _relevance: Mapping[QueryId, Mapping[str, int]] = field(repr=False)
    _query_index: Mapping[QueryId, Query] = field(repr=False)

    @property
    def num_queries(self) -> int:
        return len(self.queries)

    def query_ids(self) -> tuple[QueryId, ...]:
        return tuple(q.id for q in self.queries)

    def query(self, query_id: QueryId) -> Query:
        try:
            return self._query_index[query_id]
        except KeyError:
            raise UnknownQueryError(f"unknown query {query_id!r}") from None

    def pool(self, query_id: QueryId) -> tuple[Document, ...]:
        try:
            return self.pools[query_id]
        except KeyError:
            raise UnknownQueryError(f"unknown query {query_id!r}") from None

    def relevance(self, query_id: QueryId, doc_id: str) -> int:
        return self._relevance.get(query_id, {}).get(doc_id, 0)

    def relevance_map(self, query_id: QueryId) -> dict[str, int]:
        self.pool(query_id)  # raise on unknown query
        return dict(self._relevance.get(query_id, {}))

    def positives(self, query_id: QueryId) -> tuple[Document, ...]:
        return tuple(d for d in self.pool(query_id) if self.relevance(query_id, d.id) > 0)

    def records(self):
        """Raw (pools, judgments, kind, query_tokens) from which this dataset rebuilds."""
        pools = {qid: list(docs) for qid, docs in self.pools.items()}
        tokens = {q.id: q.tokens for q in self.queries if q.tokens is not None}
        return pools, list(self.judgments), self.kind, tokens

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.queries == other.queries
            and self.judgments == other.judgments
            and set(self.pools) == set(other.pools)
            and all(self.pools[q] == other.pools[q] for q in self.pools)
        )


def build_dataset(
    pools: Mapping[QueryId, Sequence[Document]],
    judgments: Iterable[Judgment],
    kind: DatasetKind | str,
    query_tokens: Mapping[QueryId, Sequence[int]] | None = None,
) -> Dataset:
    """Validate raw records and assemble an immutable Dataset.

    Queries and pools are sorted lexicographically by id.  Raises a distinct
    error naming the offending id for: duplicate (query, doc) judgments,
    judged documents missing from their pool, and inconsistent feature
    dimensionality.
    """
    kind = DatasetKind(kind)
    if not pools:
        raise DatasetError("dataset has no queries")
    query_tokens = dict(query_tokens or {})

    sorted_pools: dict[QueryId, tuple[Document, ...]] = {}
    feature_dim: int | None = None
    for qid in sorted(pools):
        docs = sorted(pools[qid], key=lambda d: d.id)
        if not docs:
            raise EmptyPoolError(f"query {qid!r} has an empty pool")
        seen: set[str] = set()
        for d in docs:
            if d.id in seen:
                raise DatasetError(f"query {qid!r} pool lists document {d.id!r} twice")
            seen.add(d.id)
            if d.features is not None:
                if feature_dim is None:
                    feature_dim = d.features.shape[0]
                elif d.features.shape[0] != feature_dim:
                    raise FeatureDimensionError(
                        f"document {d.id!r} has {d.features.shape[0]} features, "
                        f"expected {feature_dim}"
                    )
        sorted_pools[qid] = tuple(docs)

    pool_ids = {qid: {d.id for d in docs} for qid, docs in sorted_pools.items()}
    relevance: dict[QueryId, dict[str, int]] = {}
    ordered: list[Judgment] = []
    for j in sorted(judgments, key=lambda j: (j.query, j.doc)):
        if j.query not in sorted_pools:
            raise UnknownQueryError(f"judgment references unknown query {j.query!r}")
        per_query = relevance.setdefault(j.query, {})
        if j.doc in per_query:
            raise DuplicateJudgmentError(
                f"duplicate judgment for query {j.query!r}, doc {j.doc!r}"
            )
        if j.doc not in pool_ids[j.query]:
            raise JudgedDocNotInPoolError(
                f"judged doc {j.doc!r} missing from pool of query {j.query!r}"
            )
        per_query[j.doc] = j.relevance
        ordered.append(j)

    queries = tuple(
        Query(qid, tuple(query_tokens[qid]) if qid in query_tokens else None)
        for qid in sorted_pools
    )
    return Dataset(
        kind=kind,
        queries=queries,
        pools=sorted_pools,
        judgments=tuple(ordered),
        feature_dim=feature_dim,
        _relevance=relevance,
        _query_index={q.id: q for q in queries},
    )


def candidate_pool(
    dataset: Dataset, query_id: QueryId, exclude_positives: bool = False
) -> tuple[Document, ...]:
    """The query's candidate documents, optionally minus known-relevant ones.

    Order is the dataset's deterministic pool order.  May be empty when every
    pooled document is relevant and exclusion is on; callers must handle that.
    """
    docs = dataset.pool(query_id)
    if not exclude_positives:
        return docs
    return tuple(d for d in docs if dataset.relevance(query_id, d.id) <= 0)


def relevant_fraction(dataset: Dataset) -> float:
    """Mean over queries of (#relevant docs in pool) / (pool size)."""
    fractions = []
    for q in dataset.queries:
        docs = dataset.pool(q.id)
        n_rel = sum(1 for d in docs if dataset.relevance(q.id, d.id) > 0)
        fractions.append(n_rel / len(docs))
    return float(np.mean(fractions))
