"""Parameterized scoring functions f(d, q) with exact analytic gradients.

Four scorer kinds cover the three task families:

* ``linear``  -- w . x + b over joint query-document features (LETOR style).
* ``mlp1``    -- one tanh hidden layer with scalar output; tanh keeps scores
  bounded, which matters because downstream rewards pass through a sigmoid.
* ``matfac``  -- matrix factorization u_q . v_d + b_d with a per-item bias
  (without the bias, hardest-negative sampling degenerates on cold items).
* ``text``    -- mean token embeddings of query and document combined through
  a bilinear form, a lightweight stand-in for convolutional text encoders.

Scoring and gradients are pure functions of (params, input); training code
mutates ``scorer.params.values`` in place, and ``snapshot()`` hands out a
read-only copy safe for concurrent evaluation.

The discriminator map is ``sigmoid(f)``.  Scores are clamped to [-30, 30]
inside the sigmoid so probabilities never reach exact 0 or 1; the same clamp
is applied everywhere a sigmoid is taken.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import Document, Query

SIGMOID_CLAMP = 30.0


class RepresentationError(ValueError):
    """Document or query representation does not match the scorer kind."""


class CheckpointError(ValueError):
    pass


class NumericError(RuntimeError):
    """Scores or parameters left the finite range."""


def sigmoid(x):
    """Clamped logistic function; never underflows to 0 or saturates to 1."""
    return 1.0 / (1.0 + np.exp(-np.clip(x, -SIGMOID_CLAMP, SIGMOID_CLAMP)))


def log_sigmoid(x):
    """log(sigmoid(x)) computed as -softplus(-x); stable for any magnitude."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def softplus(x):
    """log(1 + exp(x)) without overflow; equals x + log1p(exp(-x)) for large x."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class Layout:
    """Named contiguous segments of a flat parameter vector."""

    segments: tuple[tuple[str, int, int], ...]  # (name, offset, length)

    @property
    def size(self) -> int:
        return sum(length for _, _, length in self.segments)

    def slice_of(self, name: str) -> slice:
        for seg_name, offset, length in self.segments:
            if seg_name == name:
                return slice(offset, offset + length)
        raise KeyError(name)

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.segments)


@dataclass
class ParamVector:
    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.shape[0] != self.layout.size:
            raise ValueError(
                f"parameter vector has {self.values.shape[0]} entries, "
                f"layout expects {self.layout.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector contains non-finite entries")

    def segment(self, name: str) -> np.ndarray:
        return self.values[self.layout.slice_of(name)]

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


def _layout(*segments: tuple[str, int]) -> Layout:
    out, offset = [], 0
    for name, length in segments:
        out.append((name, offset, length))
        offset += length
    return Layout(tuple(out))


def layout_for(kind: str, dims: Mapping) -> Layout:
    if kind == "linear":
        return _layout(("w", dims["feature_dim"]), ("b", 1))
    if kind == "mlp1":
        d, h = dims["feature_dim"], dims["hidden"]
        return _layout(("hidden_w", h * d), ("hidden_b", h), ("out_w", h), ("out_b", 1))
    if kind == "matfac":
        nq = len(dims["query_ids"])
        nd = len(dims["doc_ids"])
        k = dims["embed_dim"]
        return _layout(("query_embed", nq * k), ("doc_embed", nd * k), ("doc_bias", nd))
    if kind == "text":
        v, k = dims["vocab_size"], dims["embed_dim"]
        return _layout(("embed", v * k), ("bilinear", k * k))
    raise ValueError(f"unknown scorer kind {kind!r}")


def init_params(kind: str, dims: Mapping, scale: float, seed: int, *, zero: bool = False) -> ParamVector:
    """Draw parameters i.i.d. uniform in [-scale, scale] from a seeded stream.

    ``zero=True`` produces the all-zeros vector and ignores ``scale``.
    """
    layout = layout_for(kind, dims)
    if zero:
        return ParamVector(np.zeros(layout.size), layout)
    if scale <= 0:
        raise ValueError(f"init scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    return ParamVector(rng.uniform(-scale, scale, size=layout.size), layout)


class Scorer:
    """Base scoring function.  Subclasses implement score/gradient kernels.

    ``grad_weighted_sum(query, docs, weights)`` returns sum_i weights[i] *
    grad f(docs[i], query) in one vectorized pass; it is the workhorse for
    log-softmax gradients and discriminator updates.  ``uses_query`` is False
    for kinds that score joint query-document features and ignore the query
    argument; batch updates may then lump documents across queries.
    """

    kind: str
    uses_query = True

    def __init__(self, params: ParamVector):
        self.params = params

    # -- required kernels ------------------------------------------------
    def score(self, query: Query | None, doc: Document) -> float:
        raise NotImplementedError

    def gradient(self, query: Query | None, doc: Document) -> np.ndarray:
        raise NotImplementedError

    def score_many(self, query: Query | None, docs: Sequence[Document]) -> np.ndarray:
        return np.array([self.score(query, d) for d in docs])

    def grad_weighted_sum(self, query, docs, weights) -> np.ndarray:
        total = np.zeros(self.params.layout.size)
        for w, d in zip(weights, docs):
            total += w * self.gradient(query, d)
        return total

    def gradient_matrix(self, query, docs) -> np.ndarray:
        """Stacked per-document gradients, shape (len(docs), n_params)."""
        return np.stack([self.gradient(query, d) for d in docs])

    # -- bookkeeping -----------------------------------------------------
    @property
    def dims(self) -> dict:
        raise NotImplementedError

    def clone(self) -> "Scorer":
        return build_scorer(self.kind, self.dims, self.params.copy())

    def snapshot(self) -> "Scorer":
        """Frozen copy: its parameter array is marked read-only."""
        frozen = self.clone()
        frozen.params.values.flags.writeable = False
        return frozen

    def checksum(self) -> bytes:
        import hashlib

        return hashlib.sha1(self.params.values.tobytes()).digest()


def _features(doc: Document, kind: str) -> np.ndarray:
    if doc.features is None:
        raise RepresentationError(f"{kind} scorer needs features; doc {doc.id!r} has none")
    return doc.features


class LinearScorer(Scorer):
    kind = "linear"
    uses_query = False

    def __init__(self, params: ParamVector):
        super().__init__(params)
        self._dim = params.layout.slice_of("w").stop

    @property
    def dims(self):
        return {"feature_dim": self._dim}

    def score(self, query, doc):
        x = _features(doc, self.kind)
        return float(self.params.segment("w") @ x + self.params.segment("b")[0])

    def score_many(self, query, docs):
        X = np.stack([_features(d, self.kind) for d in docs])
        return X @ self.params.segment("w") + self.params.segment("b")[0]

    def gradient(self, query, doc):
        x = _features(doc, self.kind)
        return np.concatenate([x, [1.0]])

    def gradient_matrix(self, query, docs):
        X = np.stack([_features(d, self.kind) for d in docs])
        return np.hstack([X, np.ones((len(docs), 1))])

    def grad_weighted_sum(self, query, docs, weights):
        X = np.stack([_features(d, self.kind) for d in docs])
        w = np.asarray(weights, dtype=np.float64)
        return np.concatenate([X.T @ w, [w.sum()]])


class Mlp1Scorer(Scorer):
    """f = out_w . tanh(hidden_w x + hidden_b) + out_b."""

    kind = "mlp1"
    uses_query = False

    def __init__(self, params: ParamVector):
        super().__init__(params)
        h = params.layout.slice_of("hidden_b")
        self._hidden = h.stop - h.start
        self._dim = (params.layout.slice_of("hidden_w").stop) // self._hidden

    @property
    def dims(self):
        return {"feature_dim": self._dim, "hidden": self._hidden}

    def _w1(self):
        return self.params.segment("hidden_w").reshape(self._hidden, self._dim)

    def _forward(self, X: np.ndarray):
        H = np.tanh(X @ self._w1().T + self.params.segment("hidden_b"))
        f = H @ self.params.segment("out_w") + self.params.segment("out_b")[0]
        return H, f

    def score(self, query, doc):
        _, f = self._forward(_features(doc, self.kind)[None, :])
        return float(f[0])

    def score_many(self, query, docs):
        X = np.stack([_features(d, self.kind) for d in docs])
        return self._forward(X)[1]

    def gradient(self, query, doc):
        return self.grad_weighted_sum(query, [doc], np.ones(1))

    def gradient_matrix(self, query, docs):
        X = np.stack([_features(d, self.kind) for d in docs])
        H, _ = self._forward(X)
        a = (1.0 - H * H) * self.params.segment("out_w")  # (n, hidden)
        dW1 = np.einsum("nh,nd->nhd", a, X).reshape(len(docs), -1)
        return np.hstack([dW1, a, H, np.ones((len(docs), 1))])

    def grad_weighted_sum(self, query, docs, weights):
        X = np.stack([_features(d, self.kind) for d in docs])
        w = np.asarray(weights, dtype=np.float64)
        H, _ = self._forward(X)
        a = (1.0 - H * H) * self.params.segment("out_w")
        aw = a * w[:, None]
        return np.concatenate(
            [(aw.T @ X).ravel(), aw.sum(axis=0), H.T @ w, [w.sum()]]
        )


class MatFacScorer(Scorer):
    """f = u_query . v_doc + bias_doc over id-indexed embedding tables."""

    kind = "matfac"

    def __init__(self, params: ParamVector, query_ids: Sequence[str], doc_ids: Sequence[str]):
        super().__init__(params)
        self.query_ids = tuple(query_ids)
        self.doc_ids = tuple(doc_ids)
        self._q_index = {q: i for i, q in enumerate(self.query_ids)}
        self._d_index = {d: i for i, d in enumerate(self.doc_ids)}
        self._k = (params.layout.slice_of("query_embed").stop) // max(len(self.query_ids), 1)

    @property
    def dims(self):
        return {
            "query_ids": self.query_ids,
            "doc_ids": self.doc_ids,
            "embed_dim": self._k,
        }

    def _qi(self, query):
        if query is None or query.id not in self._q_index:
            qid = None if query is None else query.id
            raise RepresentationError(f"query {qid!r} not in factorization vocabulary")
        return self._q_index[query.id]

    def _di(self, doc):
        if doc.id not in self._d_index:
            raise RepresentationError(f"doc {doc.id!r} not in factorization vocabulary")
        return self._d_index[doc.id]

    def _tables(self):
        k = self._k
        qe = self.params.segment("query_embed").reshape(len(self.query_ids), k)
        de = self.params.segment("doc_embed").reshape(len(self.doc_ids), k)
        return qe, de, self.params.segment("doc_bias")

    def score(self, query, doc):
        qe, de, bias = self._tables()
        return float(qe[self._qi(query)] @ de[self._di(doc)] + bias[self._di(doc)])

    def score_many(self, query, docs):
        qe, de, bias = self._tables()
        idx = np.array([self._di(d) for d in docs])
        return de[idx] @ qe[self._qi(query)] + bias[idx]

    def gradient(self, query, doc):
        return self.grad_weighted_sum(query, [doc], np.ones(1))

    def grad_weighted_sum(self, query, docs, weights):
        qe, de, _ = self._tables()
        qi = self._qi(query)
        idx = np.array([self._di(d) for d in docs])
        w = np.asarray(weights, dtype=np.float64)
        out = np.zeros(self.params.layout.size)
        layout = self.params.layout
        qe_grad = out[layout.slice_of("query_embed")].reshape(-1, self._k)
        qe_grad[qi] = de[idx].T @ w
        de_grad = out[layout.slice_of("doc_embed")].reshape(-1, self._k)
        np.add.at(de_grad, idx, np.outer(w, qe[qi]))
        np.add.at(out[layout.slice_of("doc_bias")], idx, w)
        return out


class TextAvgEmbedScorer(Scorer):
    """Bilinear similarity of mean token embeddings: mean(E[q]) . M . mean(E[d])."""

    kind = "text"

    def __init__(self, params: ParamVector, vocab_size: int):
        super().__init__(params)
        self.vocab_size = vocab_size
        self._k = (params.layout.slice_of("embed").stop) // vocab_size

    @property
    def dims(self):
        return {"vocab_size": self.vocab_size, "embed_dim": self._k}

    def _tables(self):
        E = self.params.segment("embed").reshape(self.vocab_size, self._k)
        M = self.params.segment("bilinear").reshape(self._k, self._k)
        return E, M

    def _mean_embed(self, tokens, E, who):
        if tokens is None or len(tokens) == 0:
            raise RepresentationError(f"text scorer needs tokens; {who} has none")
        idx = np.asarray(tokens)
        if idx.min() < 0 or idx.max() >= self.vocab_size:
            raise RepresentationError(f"{who} has token id outside vocabulary")
        return E[idx].mean(axis=0)

    def score(self, query, doc):
        E, M = self._tables()
        if query is None:
            raise RepresentationError("text scorer needs a query with tokens")
        eq = self._mean_embed(query.tokens, E, f"query {query.id!r}")
        ed = self._mean_embed(doc.tokens, E, f"doc {doc.id!r}")
        return float(eq @ M @ ed)

    def score_many(self, query, docs):
        E, M = self._tables()
        eq = self._mean_embed(query.tokens, E, f"query {query.id!r}")
        lhs = M.T @ eq
        return np.array(
            [self._mean_embed(d.tokens, E, f"doc {d.id!r}") @ lhs for d in docs]
        )

    def gradient(self, query, doc):
        return self.grad_weighted_sum(query, [doc], np.ones(1))

    def grad_weighted_sum(self, query, docs, weights):
        E, M = self._tables()
        eq = self._mean_embed(query.tokens, E, f"query {query.id!r}")
        w = np.asarray(weights, dtype=np.float64)
        ed_rows = np.stack(
            [self._mean_embed(d.tokens, E, f"doc {d.id!r}") for d in docs]
        )
        ed_weighted = ed_rows.T @ w  # sum_i w_i ed_i
        embed_grad = np.zeros((self.vocab_size, self._k))
        # query-token contribution: each query token receives (M ed_i) / len(q)
        q_idx = np.asarray(query.tokens)
        np.add.at(embed_grad, q_idx, (M @ ed_weighted) / len(q_idx))
        mt_eq = M.T @ eq
        for wi, d in zip(w, docs):
            d_idx = np.asarray(d.tokens)
            np.add.at(embed_grad, d_idx, wi * mt_eq / len(d_idx))
        bilinear_grad = np.outer(eq, ed_weighted)
        return np.concatenate([embed_grad.ravel(), bilinear_grad.ravel()])


def build_scorer(kind: str, dims: Mapping, params: ParamVector | None = None, *,
                 scale: float | None = None, seed: int | None = None,
                 zero: bool = False) -> Scorer:
    """Construct a scorer of the given kind; initialize params if not supplied."""
    if params is None:
        params = init_params(kind, dims, scale if scale is not None else 0.1,
                             seed if seed is not None else 0, zero=zero)
    if kind == "linear":
        return LinearScorer(params)
    if kind == "mlp1":
        return Mlp1Scorer(params)
    if kind == "matfac":
        return MatFacScorer(params, dims["query_ids"], dims["doc_ids"])
    if kind == "text":
        return TextAvgEmbedScorer(params, dims["vocab_size"])
    raise ValueError(f"unknown scorer kind {kind!r}")


def discriminator_prob(scorer: Scorer, query, doc) -> float:
    """D(d|q) = sigmoid(f(d, q)), clamped away from exact 0 and 1."""
    return float(sigmoid(scorer.score(query, doc)))


def pairwise_prob(scorer: Scorer, query, doc_i, doc_j) -> float:
    """Probability that doc_i ranks above doc_j: sigmoid(f_i - f_j)."""
    return float(sigmoid(scorer.score(query, doc_i) - scorer.score(query, doc_j)))


# -- checkpoints ----------------------------------------------------------
# Text format, version marker first:
#   line 1: "1"
#   line 2: JSON {"kind": ..., "dims": {...}}
#   then:   "segment <name> <offset> <length>" per layout segment
#   then:   "values" followed by one repr'd float per line.

CHECKPOINT_VERSION = "1"


def save_checkpoint(scorer: Scorer, path) -> None:
    dims = dict(scorer.dims)
    for key in ("query_ids", "doc_ids"):
        if key in dims:
            dims[key] = list(dims[key])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CHECKPOINT_VERSION + "\n")
        fh.write(json.dumps({"kind": scorer.kind, "dims": dims}, sort_keys=True) + "\n")
        for name, offset, length in scorer.params.layout.segments:
            fh.write(f"segment {name} {offset} {length}\n")
        fh.write("values\n")
        for v in scorer.params.values:
            fh.write(repr(float(v)) + "\n")


def load_checkpoint(path) -> Scorer:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version in {path}")
    meta = json.loads(lines[1])
    segments, i = [], 2
    while i < len(lines) and lines[i].startswith("segment "):
        _, name, offset, length = lines[i].split()
        segments.append((name, int(offset), int(length)))
        i += 1
    if i >= len(lines) or lines[i] != "values":
        raise CheckpointError(f"malformed checkpoint {path}: missing values block")
    values = np.array([float(v) for v in lines[i + 1 :]])
    params = ParamVector(values, Layout(tuple(segments)))
    dims = meta["dims"]
    for key in ("query_ids", "doc_ids"):
        if key in dims:
            dims[key] = tuple(dims[key])
    return build_scorer(meta["kind"], dims, params)
