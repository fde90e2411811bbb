"""Dataset parsers and the planted-relevance synthetic generator.

Three on-disk formats are supported:

* LETOR text: ``<rel> qid:<q> 1:<v> 2:<v> ... # <docid>`` with dense,
  1-indexed features.  A writer is provided so parsed datasets round-trip.
* Interaction TSV: ``user<TAB>item<TAB>rating``; ratings at or above the
  threshold (default 4) become relevance 1.  Every user's pool is the full
  item catalog, and items are represented as single-token documents.
* QA JSON-lines: one record per question with fields ``question`` (tokens),
  ``candidates`` (list of token sequences) and ``correct`` (index list).
  Tokens may be vocabulary strings or ids; anything unknown maps to the
  reserved unknown id and is counted.

Real corpora are optional inputs and never bundled; all acceptance-level
training runs use the synthetic generator, which plants a hidden linear
relevance model and returns it for oracle evaluation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    Dataset,
    DatasetError,
    DatasetKind,
    Document,
    Judgment,
    build_dataset,
)


class ParseError(DatasetError):
    """Malformed input file; message carries the offending line number."""


@dataclass(frozen=True)
class SyntheticSpec:
    num_queries: int
    pool_size: int
    relevant_fraction: float
    feature_dim: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_queries < 1 or self.pool_size < 1 or self.feature_dim < 1:
            raise DatasetError("synthetic spec dimensions must be positive")
        if not 0.0 < self.relevant_fraction <= 1.0:
            raise DatasetError("relevant_fraction must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise DatasetError("noise_sigma must be non-negative")
        if math.ceil(self.relevant_fraction * self.pool_size) < 1:
            raise DatasetError("spec yields zero relevant docs per query")


class PlantedTruth(NamedTuple):
    weights: np.ndarray


def synth_retrieval(spec: SyntheticSpec) -> tuple[Dataset, PlantedTruth]:
    """Generate a closed-pool retrieval task with a planted linear scorer.

    Per query, the top ceil(relevant_fraction * pool_size) documents by
    w* . x + noise are labeled relevant.  With noise_sigma == 0 the task is
    perfectly separable by the returned weights.
    """
    rng = np.random.default_rng(spec.seed)
    w_star = rng.normal(size=spec.feature_dim)
    n_rel = math.ceil(spec.relevant_fraction * spec.pool_size)
    q_digits = max(3, len(str(spec.num_queries - 1)))
    d_digits = max(3, len(str(spec.pool_size - 1)))

    pools: dict[str, list[Document]] = {}
    judgments: list[Judgment] = []
    for qi in range(spec.num_queries):
        qid = f"q{qi:0{q_digits}d}"
        X = rng.normal(size=(spec.pool_size, spec.feature_dim))
        noisy = X @ w_star + (
            rng.normal(scale=spec.noise_sigma, size=spec.pool_size)
            if spec.noise_sigma > 0
            else 0.0
        )
        top = np.argsort(-noisy)[:n_rel]
        docs = [
            Document(id=f"{qid}_d{di:0{d_digits}d}", features=X[di])
            for di in range(spec.pool_size)
        ]
        pools[qid] = docs
        for di in top:
            judgments.append(Judgment(qid, docs[di].id, 1))

    dataset = build_dataset(pools, judgments, DatasetKind.SYNTHETIC)
    return dataset, PlantedTruth(weights=w_star)


# -- LETOR ------------------------------------------------------------------


def _letor_doc_id(comment: str, qid: str, line_no: int) -> str:
    tokens = comment.split()
    if len(tokens) >= 3 and tokens[0] == "docid" and tokens[1] == "=":
        return tokens[2]
    if len(tokens) >= 1 and tokens[0].startswith("docid="):
        return tokens[0].split("=", 1)[1]
    if len(tokens) == 1:
        return tokens[0]
    return f"q{qid}_line{line_no}"


def parse_letor(path) -> Dataset:
    """Parse a LETOR-format feature file into a validated Dataset."""
    pools: dict[str, list[Document]] = {}
    judgments: list[Judgment] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            body, _, comment = line.partition("#")
            parts = body.split()
            if len(parts) < 2 or not parts[1].startswith("qid:"):
                raise ParseError(f"{path}:{line_no}: expected '<rel> qid:<q> ...'")
            try:
                rel = int(parts[0])
            except ValueError:
                raise ParseError(f"{path}:{line_no}: bad relevance {parts[0]!r}") from None
            qid = parts[1][len("qid:") :]
            feats: dict[int, float] = {}
            for tok in parts[2:]:
                idx_s, _, val_s = tok.partition(":")
                try:
                    feats[int(idx_s)] = float(val_s)
                except ValueError:
                    raise ParseError(
                        f"{path}:{line_no}: bad feature pair {tok!r}"
                    ) from None
            if sorted(feats) != list(range(1, len(feats) + 1)):
                raise ParseError(
                    f"{path}:{line_no}: feature indices must be contiguous from 1"
                )
            vector = np.array([feats[i] for i in range(1, len(feats) + 1)])
            doc_id = _letor_doc_id(comment.strip(), qid, line_no)
            pools.setdefault(qid, []).append(Document(id=doc_id, features=vector))
            judgments.append(Judgment(qid, doc_id, rel))
    if not pools:
        raise DatasetError(f"{path}: no queries found")
    return build_dataset(pools, judgments, DatasetKind.WEB_SEARCH)


def serialize_letor(dataset: Dataset, path) -> None:
    """Write a dataset in LETOR format; parse_letor(serialize_letor(ds)) == ds."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in dataset.queries:
            for doc in dataset.pool(q.id):
                if doc.features is None:
                    raise DatasetError(f"doc {doc.id!r} has no features to serialize")
                rel = dataset.relevance(q.id, doc.id)
                feats = " ".join(
                    f"{i + 1}:{float(v)!r}" for i, v in enumerate(doc.features)
                )
                fh.write(f"{rel} qid:{q.id} {feats} # {doc.id}\n")


# -- interaction triples ------------------------------------------------------


def parse_interactions(path, threshold: float = 4.0) -> Dataset:
    """Parse ``user<TAB>item<TAB>rating`` triples into a recommendation dataset.

    Users become queries, items become single-token documents shared across
    every user's pool (the full catalog), and ratings >= threshold become
    relevance 1 (else 0).
    """
    ratings: dict[tuple[str, str], float] = {}
    items: set[str] = set()
    users: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                parts = line.split()
            if len(parts) < 3:
                raise ParseError(f"{path}:{line_no}: expected 'user item rating'")
            user, item = parts[0], parts[1]
            try:
                rating = float(parts[2])
            except ValueError:
                raise ParseError(
                    f"{path}:{line_no}: non-numeric rating {parts[2]!r}"
                ) from None
            key = (user, item)
            if key in ratings:
                raise ParseError(
                    f"{path}:{line_no}: duplicate interaction for user {user!r}, item {item!r}"
                )
            ratings[key] = rating
            users.add(user)
            items.add(item)
    if not ratings:
        raise DatasetError(f"{path}: no interactions found")

    catalog = {
        item: Document(id=item, tokens=(idx,))
        for idx, item in enumerate(sorted(items))
    }
    docs = tuple(catalog[item] for item in sorted(items))
    pools = {user: docs for user in sorted(users)}
    judgments = [
        Judgment(user, item, 1 if rating >= threshold else 0)
        for (user, item), rating in ratings.items()
    ]
    return build_dataset(pools, judgments, DatasetKind.RECOMMENDATION)


# -- QA pairs -----------------------------------------------------------------


class Vocab:
    """Token-to-id map with a reserved unknown id (== len(vocab))."""

    def __init__(self, tokens: Sequence[str]):
        self.index = {tok: i for i, tok in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise DatasetError("vocabulary contains duplicate tokens")

    @property
    def unknown_id(self) -> int:
        return len(self.index)

    @property
    def size(self) -> int:
        """Embedding-table size: all known ids plus the unknown slot."""
        return len(self.index) + 1

    def map_token(self, token) -> tuple[int, bool]:
        """Return (id, was_unknown)."""
        if isinstance(token, bool):
            return self.unknown_id, True
        if isinstance(token, int):
            if 0 <= token < len(self.index):
                return token, False
            return self.unknown_id, True
        mapped = self.index.get(token)
        if mapped is None:
            return self.unknown_id, True
        return mapped, False


class ParsedQA(NamedTuple):
    dataset: Dataset
    unknown_tokens: int


def parse_qa_pairs(path, vocab: Vocab) -> ParsedQA:
    """Parse JSON-lines QA records; returns the dataset and the unknown-token count."""
    pools: dict[str, list[Document]] = {}
    judgments: list[Judgment] = []
    query_tokens: dict[str, tuple[int, ...]] = {}
    unknown = 0

    def map_seq(tokens):
        nonlocal unknown
        out = []
        for tok in tokens:
            mapped, was_unknown = vocab.map_token(tok)
            unknown += was_unknown
            out.append(mapped)
        return tuple(out)

    with open(path, "r", encoding="utf-8") as fh:
        records = [line for line in fh.read().splitlines() if line.strip()]
    if not records:
        raise DatasetError(f"{path}: no records found")
    q_digits = max(5, len(str(len(records) - 1)))
    for line_no, line in enumerate(records, start=1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{line_no}: bad JSON ({exc.msg})") from None
        for key in ("question", "candidates", "correct"):
            if key not in rec:
                raise ParseError(f"{path}:{line_no}: missing field {key!r}")
        qid = str(rec.get("id", f"q{line_no - 1:0{q_digits}d}"))
        query_tokens[qid] = map_seq(rec["question"])
        candidates = rec["candidates"]
        if not candidates:
            raise ParseError(f"{path}:{line_no}: question has no candidates")
        a_digits = max(2, len(str(len(candidates) - 1)))
        docs = [
            Document(id=f"{qid}_a{j:0{a_digits}d}", tokens=map_seq(cand))
            for j, cand in enumerate(candidates)
        ]
        pools[qid] = docs
        for j in rec["correct"]:
            if not 0 <= j < len(candidates):
                raise ParseError(f"{path}:{line_no}: correct index {j} out of range")
            judgments.append(Judgment(qid, docs[j].id, 1))
    dataset = build_dataset(pools, judgments, DatasetKind.QA, query_tokens=query_tokens)
    return ParsedQA(dataset, unknown)


# -- transforms ---------------------------------------------------------------


def normalize_features_minmax(dataset: Dataset) -> Dataset:
    """Optional per-query min-max feature normalization pass (off by default).

    Constant features within a query map to 0.
    """
    pools: dict[str, list[Document]] = {}
    for q in dataset.queries:
        docs = dataset.pool(q.id)
        X = np.stack([d.features for d in docs])
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = np.where(hi > lo, (X - lo) / span, 0.0)
        pools[q.id] = [
            Document(id=d.id, features=X[i], tokens=d.tokens)
            for i, d in enumerate(docs)
        ]
    _, judgments, kind, tokens = dataset.records()
    return build_dataset(pools, judgments, kind, query_tokens=tokens)


def split_queries(dataset: Dataset, holdout_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic query-level split into (train, held-out) datasets."""
    if not 0.0 < holdout_fraction < 1.0:
        raise DatasetError("holdout_fraction must lie in (0, 1)")
    qids = [q.id for q in dataset.queries]
    n_held = max(1, int(round(holdout_fraction * len(qids))))
    if n_held >= len(qids):
        raise DatasetError("holdout would leave no training queries")
    rng = np.random.default_rng(seed)
    held = set(rng.choice(len(qids), size=n_held, replace=False).tolist())
    held_ids = {qids[i] for i in held}

    def subset(keep_ids):
        pools = {qid: list(dataset.pool(qid)) for qid in keep_ids}
        judgments = [j for j in dataset.judgments if j.query in keep_ids]
        tokens = {
            q.id: q.tokens for q in dataset.queries
            if q.tokens is not None and q.id in keep_ids
        }
        return build_dataset(pools, judgments, dataset.kind, query_tokens=tokens)

    train_ids = [qid for qid in qids if qid not in held_ids]
    return subset(set(train_ids)), subset(held_ids)
