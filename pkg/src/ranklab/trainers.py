"""Training regimes for adversarial and contrastive learning-to-rank.

Five trainers share one dataset/model vocabulary:

* ``irgan-pointwise`` -- minimax game between a softmax generator and a
  sigmoid discriminator; the generator's discrete sampling step is trained
  with score-function (REINFORCE) gradients.
* ``irgan-pairwise``  -- the same game over (better, worse, query) triples.
* ``single-d``        -- one discriminator feeding itself negatives drawn
  from its own normalized output distribution (self-contrastive).
* ``dual-d``          -- two discriminators feeding negatives to each other
  (co-training); one is chosen at evaluation time by seed.
* ``dns``             -- hardest-of-k uniformly drawn negatives.

The optimizer everywhere is plain SGD: it keeps the policy-gradient variance
analysis in ``pgvar`` directly applicable to what the trainers actually do.
Every epoch operation is a deterministic function of (params, dataset,
config, rng state).  Training is single-writer per model; evaluation runs on
frozen snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import core
from .baselines import (
    BaselineSpec,
    ConstantBaseline,
    MonteCarloValueBaseline,
    ValueFunctionBaseline,
)
from .core import Dataset, Document, Query, candidate_pool
from .metrics import evaluate_model
from .policy import (
    SoftmaxPolicy,
    discriminator_sampling_probs,
    log_policy_probs,
    policy_probs,
    sample_docs,
)
from .scorers import NumericError, Scorer, log_sigmoid, sigmoid, softplus
from ._util import write_csv, read_csv

TRAINER_NAMES = ("irgan-pointwise", "irgan-pairwise", "single-d", "dual-d", "dns")
TRAINER_ROLES = {
    "irgan-pointwise": ("G", "D"),
    "irgan-pairwise": ("G", "D"),
    "single-d": ("M",),
    "dual-d": ("A", "B"),
    "dns": ("D",),
}
REWARD_NAMES = ("raw", "sigmoid", "sigmoid-baselined")


class InvalidConfigError(ValueError):
    """A training-config field is missing or out of range; names the field."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 8
    epochs_outer: int = 30
    epochs_inner: int = 1
    k_samples: int = 1          # generator samples per query per update
    dns_k: int = 5
    baseline: BaselineSpec = ConstantBaseline(0.0)
    reward: str = "sigmoid-baselined"
    seed: int = 40
    temperature: float = 1.0
    exclude_positives: bool = True
    d_steps: int = 1            # discriminator updates per batch
    g_steps: int = 1            # generator updates per batch
    pretrain_epochs: int = 0
    pretrain_lr: float = 0.01

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidConfigError("learning_rate must be >= 0")
        for name in ("batch_size", "epochs_outer", "epochs_inner", "k_samples",
                     "dns_k", "d_steps", "g_steps"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1")
        if self.temperature <= 0:
            raise InvalidConfigError("temperature must be > 0")
        if self.reward not in REWARD_NAMES:
            raise InvalidConfigError(f"reward must be one of {REWARD_NAMES}")
        if self.pretrain_epochs < 0:
            raise InvalidConfigError("pretrain_epochs must be >= 0")


# Best hyperparameters per task, as tabulated for the reference experiments.
# No rate is tabulated for the adversarial trainers; 0.07 is the artifact
# default, at which the documented generator instability shows at desk scale.
DEFAULT_TRAIN_CONFIGS: dict[str, TrainConfig] = {
    "web-single-d": TrainConfig(learning_rate=0.004, batch_size=8,
                                epochs_outer=50, seed=40),
    "web-dual-d": TrainConfig(learning_rate=0.006, batch_size=8,
                              epochs_outer=50, epochs_inner=30, seed=40),
    "web-irgan": TrainConfig(learning_rate=0.07, batch_size=8, epochs_outer=30,
                             seed=40, pretrain_epochs=50, pretrain_lr=0.01),
    "recommendation": TrainConfig(learning_rate=0.02, batch_size=10,
                                  epochs_outer=20, dns_k=5, seed=70),
    "qa": TrainConfig(learning_rate=0.05, batch_size=100,
                      epochs_outer=20, epochs_inner=1, seed=40),
}

# Matching model shapes (feature size 46 for web, embedding 20 / 100 for
# recommendation / QA).
DEFAULT_MODEL_HINTS = {
    "web-search": {"kind": "mlp1", "feature_dim": 46, "hidden": 46},
    "recommendation": {"kind": "matfac", "embed_dim": 20},
    "qa": {"kind": "text", "embed_dim": 100},
    "synthetic": {"kind": "mlp1", "feature_dim": 46, "hidden": 46},
}


# -- run history --------------------------------------------------------------


@dataclass(frozen=True)
class RunRow:
    epoch: int
    model: str
    metric: str
    value: float


class RunRecord:
    """Per-epoch metric history; epochs are strictly increasing per (model, metric)."""

    def __init__(self):
        self.rows: list[RunRow] = []
        self._last: dict[tuple[str, str], int] = {}

    def append(self, epoch: int, model: str, metric: str, value: float) -> None:
        key = (model, metric)
        last = self._last.get(key)
        if last is not None and epoch <= last:
            raise ValueError(
                f"epoch {epoch} not increasing for {model}/{metric} (last {last})"
            )
        self._last[key] = epoch
        self.rows.append(RunRow(epoch, model, metric, float(value)))

    def extend(self, rows: Iterable[RunRow]) -> None:
        for row in rows:
            self.append(row.epoch, row.model, row.metric, row.value)

    def series(self, model: str, metric: str) -> list[tuple[int, float]]:
        return [(r.epoch, r.value) for r in self.rows
                if r.model == model and r.metric == metric]

    def value_at(self, model: str, metric: str, epoch: int) -> float:
        for r in self.rows:
            if r.model == model and r.metric == metric and r.epoch == epoch:
                return r.value
        raise KeyError((model, metric, epoch))

    def to_csv(self, path) -> None:
        write_csv(path, ("epoch", "model", "metric", "value"),
                  ((r.epoch, r.model, r.metric, r.value) for r in self.rows))

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        header, rows = read_csv(path)
        if header != ["epoch", "model", "metric", "value"]:
            raise ValueError(f"unexpected curve CSV header {header}")
        record = cls()
        for epoch, model, metric, value in rows:
            record.append(int(epoch), model, metric, float(value))
        return record

    def __eq__(self, other):
        return isinstance(other, RunRecord) and self.rows == other.rows


# -- rewards ------------------------------------------------------------------


class RewardFn:
    def __call__(self, model: Scorer, query, doc) -> float:
        raise NotImplementedError

    def many(self, model: Scorer, query, docs) -> np.ndarray:
        return np.array([self(model, query, d) for d in docs])


class RawReward(RewardFn):
    """softplus(f): the reward attached to the raw policy-gradient update."""

    def __call__(self, model, query, doc):
        return float(softplus(model.score(query, doc)))

    def many(self, model, query, docs):
        return softplus(model.score_many(query, docs))


class SigmoidReward(RewardFn):
    """sigmoid(f) with no embedded baseline."""

    def __call__(self, model, query, doc):
        return float(sigmoid(model.score(query, doc)))

    def many(self, model, query, docs):
        return sigmoid(model.score_many(query, docs))


@dataclass(frozen=True)
class SigmoidBaselinedReward(RewardFn):
    """2 * (sigmoid(f) - b): the training-friendly reward with b folded in."""

    b: float = 0.5

    def __call__(self, model, query, doc):
        return float(2.0 * (sigmoid(model.score(query, doc)) - self.b))

    def many(self, model, query, docs):
        return 2.0 * (sigmoid(model.score_many(query, docs)) - self.b)


def reinforce_reward_raw(model: Scorer, query, doc) -> float:
    """softplus(f(d, q)), overflow-safe at any score magnitude."""
    return RawReward()(model, query, doc)


def reinforce_reward_baselined(model: Scorer, query, doc, b: float = 0.5) -> float:
    """2 * (sigmoid(f) - b); with b = 0.5 the range is (-1, 1)."""
    return SigmoidBaselinedReward(b)(model, query, doc)


def make_reward(kind: str) -> RewardFn:
    if kind == "raw":
        return RawReward()
    if kind == "sigmoid":
        return SigmoidReward()
    if kind == "sigmoid-baselined":
        return SigmoidBaselinedReward(0.5)
    raise InvalidConfigError(f"reward must be one of {REWARD_NAMES}")


# -- baselines over pools ------------------------------------------------------


def value_function_baseline(policy: SoftmaxPolicy, model: Scorer, query, pool,
                            reward_fn: RewardFn) -> float:
    """Exact expected reward under the policy: sum_d p(d|q) * reward(d, q)."""
    probs = policy_probs(policy, query, pool)
    return float(probs @ reward_fn.many(model, query, pool))


def value_function_baseline_mc(policy: SoftmaxPolicy, model: Scorer, query, pool,
                               reward_fn: RewardFn, n: int,
                               rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo estimate of the value baseline; returns (estimate, std error)."""
    if n < 2:
        raise ValueError("Monte-Carlo baseline needs n >= 2")
    docs = sample_docs(policy, query, pool, n, rng)
    rewards = reward_fn.many(model, query, docs)
    return float(rewards.mean()), float(rewards.std(ddof=1) / np.sqrt(n))


def resolve_baseline(spec: BaselineSpec, policy, model, query, pool,
                     reward_fn: RewardFn, rng) -> float:
    if isinstance(spec, ConstantBaseline):
        return spec.value
    if isinstance(spec, ValueFunctionBaseline):
        return value_function_baseline(policy, model, query, pool, reward_fn)
    if isinstance(spec, MonteCarloValueBaseline):
        return value_function_baseline_mc(policy, model, query, pool,
                                          reward_fn, spec.n, rng)[0]
    raise TypeError(f"not a baseline spec: {spec!r}")


# -- gradient building blocks ---------------------------------------------------


def generator_gradient(policy: SoftmaxPolicy, model: Scorer, query, pool, k: int,
                       reward_fn: RewardFn, baseline: BaselineSpec,
                       rng: np.random.Generator) -> np.ndarray:
    """(1/k) sum over k sampled docs of grad log p(d|q) * (reward(d) - b(q)).

    Folded into a single weighted gradient sum over the pool, so one call
    costs one vectorized pass regardless of k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    probs = policy_probs(policy, query, pool)
    idx = rng.choice(len(pool), size=k, replace=True, p=probs)
    b = resolve_baseline(baseline, policy, model, query, pool, reward_fn, rng)
    unique, counts = np.unique(idx, return_counts=True)
    advantages = reward_fn.many(model, query, [pool[i] for i in unique]) - b
    weights = -probs * float(counts @ advantages)
    np.add.at(weights, unique, counts * advantages)
    return policy.scorer.grad_weighted_sum(query, pool, weights) / (k * policy.temperature)


def _group_by_query(model, pairs):
    if not model.uses_query:
        return [(None, [d for _, d in pairs])] if pairs else []
    groups: dict[str | None, tuple[Query | None, list[Document]]] = {}
    for q, d in pairs:
        key = q.id if q is not None else None
        groups.setdefault(key, (q, []))[1].append(d)
    return groups.values()


def discriminator_step(model: Scorer, positives, negatives, lr: float) -> float:
    """One ascent step on sum log sigmoid(f) over positives plus
    sum log(1 - sigmoid(f)) over negatives; returns the pre-step objective.

    ``positives`` and ``negatives`` are (Query, Document) pairs.
    """
    if not positives and not negatives:
        raise ValueError("discriminator step needs at least one sample")
    objective = 0.0
    grad = np.zeros(model.params.layout.size)
    for query, docs in _group_by_query(model, positives):
        f = model.score_many(query, docs)
        objective += float(log_sigmoid(f).sum())
        grad += model.grad_weighted_sum(query, docs, 1.0 - sigmoid(f))
    for query, docs in _group_by_query(model, negatives):
        f = model.score_many(query, docs)
        objective += float(log_sigmoid(-f).sum())
        grad += model.grad_weighted_sum(query, docs, -sigmoid(f))
    model.params.values += lr * grad
    return objective


def discriminator_pair_step(model: Scorer, triples, lr: float) -> float:
    """Ascent on sum log sigmoid(f(better) - f(worse)) over (q, better, worse)."""
    if not triples:
        raise ValueError("pairwise step needs at least one triple")
    objective = 0.0
    grad = np.zeros(model.params.layout.size)
    for query, better, worse in triples:
        delta = model.score(query, better) - model.score(query, worse)
        objective += float(log_sigmoid(delta))
        coef = float(1.0 - sigmoid(delta))
        grad += model.grad_weighted_sum(query, [better, worse], [coef, -coef])
    model.params.values += lr * grad
    return objective


# -- pretraining -----------------------------------------------------------------


def pretrain_mle(policy: SoftmaxPolicy, dataset: Dataset, cfg: TrainConfig) -> RunRecord:
    """Maximize sum log p(relevant doc | query) by full-batch gradient ascent.

    Mutates the policy's scorer in place; the returned record carries the
    post-step mean log-likelihood per epoch and the count of queries skipped
    for having no relevant document.
    """
    record = RunRecord()
    usable = []
    skipped = 0
    for q in dataset.queries:
        pos = dataset.positives(q.id)
        if pos:
            pool = dataset.pool(q.id)
            index = {d.id: i for i, d in enumerate(pool)}
            usable.append((q, pool, [index[p.id] for p in pos]))
        else:
            skipped += 1
    if not usable:
        raise core.DatasetError("no query has a relevant document to pretrain on")

    n_pairs = sum(len(pos_idx) for _, _, pos_idx in usable)

    def mean_loglik():
        total = 0.0
        for q, pool, pos_idx in usable:
            logp = log_policy_probs(policy, q, pool)
            total += float(logp[pos_idx].sum())
        return total / n_pairs

    for epoch in range(1, cfg.epochs_outer + 1):
        grad = np.zeros(policy.scorer.params.layout.size)
        for q, pool, pos_idx in usable:
            weights = -len(pos_idx) * policy_probs(policy, q, pool)
            np.add.at(weights, pos_idx, 1.0)
            grad += policy.scorer.grad_weighted_sum(query=q, docs=pool, weights=weights)
        grad /= n_pairs * policy.temperature
        policy.scorer.params.values += cfg.learning_rate * grad
        record.append(epoch, "G", "log_likelihood", mean_loglik())
        record.append(epoch, "G", "queries_skipped", skipped)
    return record


# -- epoch operations --------------------------------------------------------------


def _batches(queries: Sequence[Query], size: int):
    for i in range(0, len(queries), size):
        yield queries[i : i + size]


def _usable_for_negatives(dataset, query, exclude_positives):
    """(positives, negative pool) or None when the query cannot produce both."""
    pos = dataset.positives(query.id)
    neg_pool = candidate_pool(dataset, query.id, exclude_positives)
    if not pos or not neg_pool:
        return None
    return pos, neg_pool


def irgan_pointwise_epoch(generator: SoftmaxPolicy, discriminator: Scorer,
                          dataset: Dataset, cfg: TrainConfig,
                          rng: np.random.Generator, epoch: int = 1) -> list[RunRow]:
    """One adversarial epoch: per batch, the discriminator is pushed up on true
    positives and down on generator samples, then the generator takes a
    policy-gradient step on the configured reward/baseline."""
    reward_fn = make_reward(cfg.reward)
    skipped = 0
    d_obj = d_n = 0.0
    reward_sum = reward_n = 0.0
    for batch in _batches(dataset.queries, cfg.batch_size):
        active = []
        for q in batch:
            usable = _usable_for_negatives(dataset, q, cfg.exclude_positives)
            if usable is None:
                skipped += 1
                continue
            active.append((q, *usable))
        if not active:
            continue
        for _ in range(cfg.d_steps):
            positives, negatives = [], []
            for q, pos, neg_pool in active:
                negs = sample_docs(generator, q, neg_pool, cfg.k_samples, rng)
                reward_sum += float(reward_fn.many(discriminator, q, negs).sum())
                reward_n += len(negs)
                positives.extend((q, p) for p in pos)
                negatives.extend((q, n) for n in negs)
            obj = discriminator_step(discriminator, positives, negatives, cfg.learning_rate)
            d_obj += obj / (len(positives) + len(negatives))
            d_n += 1
        for _ in range(cfg.g_steps):
            grad = np.zeros(generator.scorer.params.layout.size)
            for q, _, neg_pool in active:
                grad += generator_gradient(generator, discriminator, q, neg_pool,
                                           cfg.k_samples, reward_fn, cfg.baseline, rng)
            generator.scorer.params.values += cfg.learning_rate * grad / len(active)
    objective = irgan_objective(generator, discriminator, dataset, n_mc=1000,
                                rng=np.random.default_rng(0))
    return [
        RunRow(epoch, "GAN", "objective", objective),
        RunRow(epoch, "D", "objective_mean", d_obj / d_n if d_n else 0.0),
        RunRow(epoch, "G", "reward_mean", reward_sum / reward_n if reward_n else 0.0),
        RunRow(epoch, "G", "queries_skipped", skipped),
    ]


@dataclass(frozen=True)
class _PairwiseReward(RewardFn):
    """2 * (sigmoid(f(d) - f(anchor)) - 0.5): pairwise analog of the pointwise
    baselined reward, where the anchor is the paired relevant document."""

    anchor: Document

    def __call__(self, model, query, doc):
        delta = model.score(query, doc) - model.score(query, self.anchor)
        return float(2.0 * (sigmoid(delta) - 0.5))

    def many(self, model, query, docs):
        f_anchor = model.score(query, self.anchor)
        return 2.0 * (sigmoid(model.score_many(query, docs) - f_anchor) - 0.5)


def irgan_pairwise_epoch(generator: SoftmaxPolicy, discriminator: Scorer,
                         dataset: Dataset, cfg: TrainConfig,
                         rng: np.random.Generator, epoch: int = 1) -> list[RunRow]:
    """Adversarial epoch over triples: the discriminator learns to rank each
    relevant document above a generator-sampled one."""
    skipped = 0
    d_obj = d_n = 0.0
    reward_sum = reward_n = 0.0
    for batch in _batches(dataset.queries, cfg.batch_size):
        active = []
        for q in batch:
            usable = _usable_for_negatives(dataset, q, cfg.exclude_positives)
            if usable is None:
                skipped += 1
                continue
            active.append((q, *usable))
        if not active:
            continue
        for _ in range(cfg.d_steps):
            triples = []
            for q, pos, neg_pool in active:
                for anchor in pos:
                    sampled = sample_docs(generator, q, neg_pool, 1, rng)[0]
                    triples.append((q, anchor, sampled))
                    reward_sum += _PairwiseReward(anchor)(discriminator, q, sampled)
                    reward_n += 1
            obj = discriminator_pair_step(discriminator, triples, cfg.learning_rate)
            d_obj += obj / len(triples)
            d_n += 1
        for _ in range(cfg.g_steps):
            grad = np.zeros(generator.scorer.params.layout.size)
            count = 0
            for q, pos, neg_pool in active:
                for anchor in pos:
                    grad += generator_gradient(generator, discriminator, q, neg_pool,
                                               cfg.k_samples, _PairwiseReward(anchor),
                                               cfg.baseline, rng)
                    count += 1
            generator.scorer.params.values += cfg.learning_rate * grad / count
    return [
        RunRow(epoch, "D", "objective_mean", d_obj / d_n if d_n else 0.0),
        RunRow(epoch, "G", "reward_mean", reward_sum / reward_n if reward_n else 0.0),
        RunRow(epoch, "G", "queries_skipped", skipped),
    ]


def _contrastive_batches(model: Scorer, sampler_probs, dataset, cfg, rng):
    """Shared inner loop for single-d and dual-d: positives from judgments,
    negatives drawn from ``sampler_probs`` (a qid -> (pool, probs) map)."""
    obj = n = 0.0
    for batch in _batches(dataset.queries, cfg.batch_size):
        positives, negatives = [], []
        for q in batch:
            entry = sampler_probs.get(q.id)
            if entry is None:
                continue
            pos, neg_pool, probs = entry
            idx = rng.choice(len(neg_pool), size=len(pos), replace=True, p=probs)
            positives.extend((q, p) for p in pos)
            negatives.extend((q, neg_pool[i]) for i in idx)
        if not positives:
            continue
        step_obj = discriminator_step(model, positives, negatives, cfg.learning_rate)
        obj += step_obj / (len(positives) + len(negatives))
        n += 1
    return obj / n if n else 0.0


def _sampler_table(sampler: Scorer, dataset, cfg):
    """Precompute the sampler's normalized output distribution per query."""
    table = {}
    skipped = 0
    for q in dataset.queries:
        usable = _usable_for_negatives(dataset, q, cfg.exclude_positives)
        if usable is None:
            skipped += 1
            continue
        pos, neg_pool = usable
        table[q.id] = (pos, neg_pool, discriminator_sampling_probs(sampler, q, neg_pool))
    return table, skipped


def single_d_epoch(model: Scorer, dataset: Dataset, cfg: TrainConfig,
                   rng: np.random.Generator, epoch: int = 1) -> list[RunRow]:
    """Self-contrastive epoch: negatives sampled from the model's own
    normalized output over the (positives-excluded) pool."""
    table, skipped = _sampler_table(model, dataset, cfg)
    mean_obj = _contrastive_batches(model, table, dataset, cfg, rng)
    return [
        RunRow(epoch, "M", "objective_mean", mean_obj),
        RunRow(epoch, "M", "queries_skipped", skipped),
    ]


def dual_d_outer_epoch(model_a: Scorer, model_b: Scorer, dataset: Dataset,
                       cfg: TrainConfig, rng: np.random.Generator,
                       epoch: int = 1) -> list[RunRow]:
    """Co-training outer epoch.

    Both models train for ``epochs_inner`` epochs against the partner's state
    frozen at the start of the outer epoch (so two identically initialized
    models fed identical streams stay identical), with the frozen copy's
    parameter array marked read-only to enforce the no-update contract.
    """
    phase_seed = int(rng.integers(2**63))
    snap_a, snap_b = model_a.snapshot(), model_b.snapshot()
    rows = []
    for active, frozen, other, tag in (
        (model_a, snap_b, model_b, "A"),
        (model_b, snap_a, model_a, "B"),
    ):
        partner_sum = other.checksum()
        table, skipped = _sampler_table(frozen, dataset, cfg)
        phase_rng = np.random.default_rng(phase_seed)
        mean_obj = 0.0
        for _ in range(cfg.epochs_inner):
            mean_obj = _contrastive_batches(active, table, dataset, cfg, phase_rng)
        if other.checksum() != partner_sum:
            raise NumericError(f"partner of {tag} was modified during its dual-d phase")
        rows.append(RunRow(epoch, tag, "objective_mean", mean_obj))
        rows.append(RunRow(epoch, tag, "queries_skipped", skipped))
    return rows


def dns_epoch(model: Scorer, dataset: Dataset, cfg: TrainConfig,
              rng: np.random.Generator, epoch: int = 1) -> list[RunRow]:
    """Hardest-of-k negative sampling: per positive, draw dns_k uniform
    candidates (without replacement) and keep the one the model scores highest."""
    skipped = 0
    obj = n = 0.0
    for batch in _batches(dataset.queries, cfg.batch_size):
        positives, negatives = [], []
        for q in batch:
            usable = _usable_for_negatives(dataset, q, cfg.exclude_positives)
            if usable is None:
                skipped += 1
                continue
            pos, neg_pool = usable
            for p in pos:
                k = min(cfg.dns_k, len(neg_pool))
                idx = rng.choice(len(neg_pool), size=k, replace=False)
                cand = [neg_pool[i] for i in idx]
                hardest = cand[int(np.argmax(model.score_many(q, cand)))]
                positives.append((q, p))
                negatives.append((q, hardest))
        if not positives:
            continue
        step_obj = discriminator_step(model, positives, negatives, cfg.learning_rate)
        obj += step_obj / (len(positives) + len(negatives))
        n += 1
    return [
        RunRow(epoch, "D", "objective_mean", obj / n if n else 0.0),
        RunRow(epoch, "D", "queries_skipped", skipped),
    ]


def irgan_objective(generator: SoftmaxPolicy, discriminator: Scorer,
                    dataset: Dataset, n_mc: int, rng: np.random.Generator) -> float:
    """The joint minimax objective: per query, the expected log D over the true
    (relevant-document) distribution plus the expected log(1 - D) under the
    generator.  Exact enumeration over pools of up to 1000 documents, else
    Monte Carlo with n_mc draws.  The true distribution is uniform over
    relevant documents.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    total = 0.0
    for q in dataset.queries:
        pool = dataset.pool(q.id)
        pos = dataset.positives(q.id)
        if pos:
            total += float(log_sigmoid(discriminator.score_many(q, pos)).mean())
        if len(pool) <= 1000:
            probs = policy_probs(generator, q, pool)
            total += float(probs @ log_sigmoid(-discriminator.score_many(q, pool)))
        else:
            docs = sample_docs(generator, q, pool, n_mc, rng)
            total += float(log_sigmoid(-discriminator.score_many(q, docs)).mean())
    return total


# -- whole-run drivers ----------------------------------------------------------


@dataclass
class TrainResult:
    record: RunRecord
    models: dict[str, Scorer]
    chosen: str | None = None


def _check_finite(models: dict[str, Scorer]) -> None:
    for tag, model in models.items():
        if not np.all(np.isfinite(model.params.values)):
            raise NumericError(f"model {tag!r} has non-finite parameters")


def _eval_rows(models, epoch, eval_dataset, metric_names):
    rows = []
    for tag in sorted(models):
        report = evaluate_model(models[tag], eval_dataset, metric_names)
        for metric in metric_names:
            rows.append(RunRow(epoch, tag, metric, report.values[metric]))
    return rows


def run_trainer(name: str, dataset: Dataset, cfg: TrainConfig,
                models: dict[str, Scorer], eval_dataset: Dataset | None = None,
                metric_names: Sequence[str] = ("p@5", "ndcg@5")) -> TrainResult:
    """Train ``models`` for cfg.epochs_outer epochs under the named regime.

    Expected model roles: irgan-* -> {G, D}; single-d -> {M}; dual-d -> {A, B};
    dns -> {D}.  When ``eval_dataset`` is given, every model is evaluated
    before training (epoch 0) and after each epoch.  Raises NumericError as
    soon as any parameter leaves the finite range.
    """
    if name not in TRAINER_NAMES:
        raise InvalidConfigError(
            f"unknown trainer {name!r}; expected one of {TRAINER_NAMES}"
        )
    expected_roles = set(TRAINER_ROLES[name])
    if set(models) != expected_roles:
        raise InvalidConfigError(
            f"trainer {name!r} needs models {sorted(expected_roles)}, "
            f"got {sorted(models)}"
        )

    rng = np.random.default_rng(cfg.seed)
    record = RunRecord()
    generator = None
    if name.startswith("irgan"):
        generator = SoftmaxPolicy(models["G"], cfg.temperature)
        if cfg.pretrain_epochs > 0:
            pre_cfg = replace(cfg, epochs_outer=cfg.pretrain_epochs,
                              learning_rate=cfg.pretrain_lr, pretrain_epochs=0)
            record.extend(pretrain_mle(generator, dataset, pre_cfg).rows)

    if eval_dataset is not None:
        record.extend(_eval_rows(models, 0, eval_dataset, metric_names))

    for epoch in range(1, cfg.epochs_outer + 1):
        if name == "irgan-pointwise":
            rows = irgan_pointwise_epoch(generator, models["D"], dataset, cfg, rng, epoch)
        elif name == "irgan-pairwise":
            rows = irgan_pairwise_epoch(generator, models["D"], dataset, cfg, rng, epoch)
        elif name == "single-d":
            rows = single_d_epoch(models["M"], dataset, cfg, rng, epoch)
        elif name == "dual-d":
            rows = dual_d_outer_epoch(models["A"], models["B"], dataset, cfg, rng, epoch)
        else:
            rows = dns_epoch(models["D"], dataset, cfg, rng, epoch)
        record.extend(rows)
        _check_finite(models)
        if eval_dataset is not None:
            record.extend(_eval_rows(models, epoch, eval_dataset, metric_names))

    chosen = None
    if name == "dual-d":
        chosen = "A" if int(rng.integers(2)) == 0 else "B"
    return TrainResult(record=record, models=models, chosen=chosen)
