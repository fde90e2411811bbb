"""Generator distribution over candidate pools.

A SoftmaxPolicy turns a scorer into p(d|q) = softmax(scores / T) over an
explicit pool.  Sampling is i.i.d. with replacement by default, matching the
expectation the policy-gradient update averages over; a without-replacement
flag exists for ablations.  All operations are pure given (params snapshot,
rng), so evaluation can run concurrently on frozen scorer snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Document, EmptyPoolError, Query
from .scorers import NumericError, Scorer, sigmoid


@dataclass
class SoftmaxPolicy:
    scorer: Scorer
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def _check_pool(pool):
    if len(pool) == 0:
        raise EmptyPoolError("candidate pool is empty")


def _checked_scores(scorer, query, pool) -> np.ndarray:
    scores = scorer.score_many(query, pool)
    if not np.all(np.isfinite(scores)):
        raise NumericError("scores are not finite; cannot form a sampling distribution")
    return scores


def policy_probs(policy: SoftmaxPolicy, query: Query | None, pool) -> np.ndarray:
    """softmax(scores / T) with max-subtraction; sums to 1 within 1e-12."""
    _check_pool(pool)
    z = _checked_scores(policy.scorer, query, pool) / policy.temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def log_policy_probs(policy: SoftmaxPolicy, query, pool) -> np.ndarray:
    _check_pool(pool)
    z = _checked_scores(policy.scorer, query, pool) / policy.temperature
    z -= z.max()
    return z - np.log(np.exp(z).sum())


def sample_docs(policy: SoftmaxPolicy, query, pool, k: int,
                rng: np.random.Generator, replace: bool = True) -> list[Document]:
    """Draw k documents i.i.d. from the policy distribution over the pool."""
    _check_pool(pool)
    if k < 1:
        raise ValueError(f"sample count must be >= 1, got {k}")
    probs = policy_probs(policy, query, pool)
    idx = rng.choice(len(pool), size=k, replace=replace, p=probs)
    return [pool[i] for i in idx]


def log_prob_gradient(policy: SoftmaxPolicy, query, pool, doc: Document) -> np.ndarray:
    """grad_theta log p(doc|q) = (grad s_doc - sum_i p_i grad s_i) / T."""
    _check_pool(pool)
    positions = [i for i, d in enumerate(pool) if d.id == doc.id]
    if not positions:
        raise ValueError(f"doc {doc.id!r} not in the candidate pool")
    probs = policy_probs(policy, query, pool)
    weights = -probs
    weights[positions[0]] += 1.0
    return policy.scorer.grad_weighted_sum(query, pool, weights) / policy.temperature


def normalized_discriminator_sampling(model: Scorer, query, pool, k: int,
                                      rng: np.random.Generator) -> list[Document]:
    """Draw k documents with probability sigmoid(f(d,q)) / sum over the pool.

    This is the self-contrastive sampler: the discriminator's own output,
    normalized over the pool, is the negative-sampling distribution.
    """
    _check_pool(pool)
    if k < 1:
        raise ValueError(f"sample count must be >= 1, got {k}")
    probs = discriminator_sampling_probs(model, query, pool)
    idx = rng.choice(len(pool), size=k, replace=True, p=probs)
    return [pool[i] for i in idx]


def discriminator_sampling_probs(model: Scorer, query, pool) -> np.ndarray:
    """The normalized sampling weights used by normalized_discriminator_sampling."""
    _check_pool(pool)
    weights = sigmoid(_checked_scores(model, query, pool))
    return weights / weights.sum()
