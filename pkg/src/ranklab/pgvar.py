"""Exact variance laboratory for score-function (REINFORCE) gradient updates.

The retrieval setting is a one-step decision problem: states are queries,
actions are pooled documents, the action value of a pair is the reward the
discriminator assigns it, and the state-visitation distribution weights the
queries.  At desk scale everything is enumerable, so the quantities that are
approximated in training can be computed exactly here:

* the gradient update g(b) = grad log pi(a|s) * (value(s,a) - b) and its
  exact mean and variance under (visitation, policy);
* the per-state split of actions into those valued below vs at-or-above a
  constant baseline, and the highest below-baseline value;
* the decomposition of the variance into below/above contributions, and the
  closed-form lower bound obtained by pulling the squared distance between
  the baseline and the highest below-baseline value out of the below term.

The lower bound is computed in both algebraic factorings, which must agree,
and the checker reports it against both the below-baseline term (always
expected to dominate it on low-reward instances) and the total variance
(which additionally assumes the above-baseline mass is negligible).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Dataset, DatasetError, Document, Query
from .baselines import BaselineSpec, ConstantBaseline, ValueFunctionBaseline
from .dataio import SyntheticSpec, synth_retrieval
from .policy import SoftmaxPolicy, policy_probs
from .scorers import Scorer, build_scorer
from .trainers import TrainConfig, dns_epoch, make_reward
from ._util import write_csv

ENUMERATION_LIMIT = 1_000_000


class EnumerationLimitError(ValueError):
    pass


class UndefinedBoundError(ValueError):
    """Every action sits at or above the baseline, so the bound has no anchor."""


@dataclass(frozen=True)
class MDPInstance:
    """Tabular one-step decision problem: (query, document pool, values, visitation)."""

    states: tuple[Query, ...]
    pools: tuple[tuple[Document, ...], ...]
    q_values: tuple[np.ndarray, ...]
    visitation: np.ndarray

    def __post_init__(self):
        if not (len(self.states) == len(self.pools) == len(self.q_values)):
            raise DatasetError("states, pools and q_values must align")
        if len(self.states) == 0:
            raise DatasetError("instance needs at least one state")
        object.__setattr__(self, "visitation",
                           np.asarray(self.visitation, dtype=np.float64))
        if self.visitation.shape != (len(self.states),):
            raise DatasetError("visitation must have one entry per state")
        if abs(self.visitation.sum() - 1.0) > 1e-9 or (self.visitation < 0).any():
            raise DatasetError("visitation must be a probability vector")
        qvals = []
        for pool, q in zip(self.pools, self.q_values):
            if len(pool) == 0:
                raise DatasetError("every state needs at least one action")
            arr = np.asarray(q, dtype=np.float64)
            if arr.shape != (len(pool),):
                raise DatasetError("q_values must align with the pool")
            if not np.all(np.isfinite(arr)):
                raise DatasetError("q_values must be finite")
            qvals.append(arr)
        object.__setattr__(self, "q_values", tuple(qvals))

    @property
    def total_pairs(self) -> int:
        return sum(len(p) for p in self.pools)


def build_instance(dataset: Dataset, model: Scorer,
                   reward_kind: str = "sigmoid") -> MDPInstance:
    """States are the dataset's queries, actions its pools, values the model's
    reward on each pair ('sigmoid' or 'raw'), visitation uniform over queries.
    Judgments are not consulted: the value table needs only the model."""
    if reward_kind not in ("sigmoid", "raw"):
        raise ValueError("reward_kind must be 'sigmoid' or 'raw'")
    reward = make_reward(reward_kind)
    states, pools, qvals = [], [], []
    for q in dataset.queries:
        pool = dataset.pool(q.id)
        states.append(q)
        pools.append(pool)
        qvals.append(reward.many(model, q, pool))
    n = len(states)
    return MDPInstance(tuple(states), tuple(pools), tuple(qvals),
                       np.full(n, 1.0 / n))


def _check_enumerable(instance: MDPInstance) -> None:
    if instance.total_pairs > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"instance has {instance.total_pairs} state-action pairs; "
            f"exact enumeration is capped at {ENUMERATION_LIMIT}"
        )


def _state_policy(instance: MDPInstance, policy: SoftmaxPolicy, s: int):
    """(probs, grad-log-prob matrix) for one state; rows align with the pool."""
    query, pool = instance.states[s], instance.pools[s]
    probs = policy_probs(policy, query, pool)
    gmat = policy.scorer.gradient_matrix(query, pool)
    gradlog = (gmat - probs @ gmat) / policy.temperature
    return probs, gradlog


def _baseline_value(instance, baseline: BaselineSpec, probs, s: int) -> float:
    if isinstance(baseline, ConstantBaseline):
        return baseline.value
    if isinstance(baseline, ValueFunctionBaseline):
        return float(probs @ instance.q_values[s])
    raise TypeError(
        "the variance lab supports constant and exact value-function baselines"
    )


def gradient_sample(instance: MDPInstance, policy: SoftmaxPolicy,
                    baseline: BaselineSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw of g(b): sample a state by visitation, an action by policy."""
    s = int(rng.choice(len(instance.states), p=instance.visitation))
    probs, gradlog = _state_policy(instance, policy, s)
    a = int(rng.choice(len(probs), p=probs))
    b = _baseline_value(instance, baseline, probs, s)
    return gradlog[a] * (instance.q_values[s][a] - b)


def exact_gradient_mean(instance: MDPInstance, policy: SoftmaxPolicy,
                        baseline: BaselineSpec) -> np.ndarray:
    """E[g(b)] by full enumeration over states and actions."""
    _check_enumerable(instance)
    mean = np.zeros(policy.scorer.params.layout.size)
    for s, rho in enumerate(instance.visitation):
        if rho == 0.0:
            continue
        probs, gradlog = _state_policy(instance, policy, s)
        b = _baseline_value(instance, baseline, probs, s)
        mean += rho * (gradlog.T @ (probs * (instance.q_values[s] - b)))
    return mean


def exact_variance(instance: MDPInstance, policy: SoftmaxPolicy,
                   baseline: BaselineSpec) -> float:
    """E[||g(b) - E[g(b)]||^2] by full enumeration."""
    mean = exact_gradient_mean(instance, policy, baseline)
    total = 0.0
    for s, rho in enumerate(instance.visitation):
        if rho == 0.0:
            continue
        probs, gradlog = _state_policy(instance, policy, s)
        b = _baseline_value(instance, baseline, probs, s)
        g = gradlog * (instance.q_values[s] - b)[:, None]
        total += rho * float(probs @ ((g - mean) ** 2).sum(axis=1))
    return total


def mc_variance(instance: MDPInstance, policy: SoftmaxPolicy,
                baseline: BaselineSpec, n: int,
                rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo estimate of the gradient variance; returns (estimate, SE).

    Draws n i.i.d. gradient samples.  Because g takes finitely many values,
    the draws are tallied as multinomial counts over (state, action) pairs
    (distributionally identical to n sequential samples) and the sample
    variance is accumulated from the tally, which is numerically exact.
    """
    if n < 2:
        raise ValueError("mc_variance needs n >= 2")
    _check_enumerable(instance)
    state_counts = rng.multinomial(n, instance.visitation)
    per_state = []
    g_sum = None
    for s, count in enumerate(state_counts):
        if count == 0:
            per_state.append(None)
            continue
        probs, gradlog = _state_policy(instance, policy, s)
        action_counts = rng.multinomial(count, probs)
        b = _baseline_value(instance, baseline, probs, s)
        g = gradlog * (instance.q_values[s] - b)[:, None]
        per_state.append((action_counts, g))
        contrib = action_counts @ g
        g_sum = contrib if g_sum is None else g_sum + contrib
    mean = g_sum / n
    sq_sum = 0.0   # sum over draws of ||g - mean||^2
    quad_sum = 0.0  # sum over draws of ||g - mean||^4
    for entry in per_state:
        if entry is None:
            continue
        action_counts, g = entry
        sq = ((g - mean) ** 2).sum(axis=1)
        sq_sum += float(action_counts @ sq)
        quad_sum += float(action_counts @ sq**2)
    estimate = sq_sum / (n - 1)
    mean_sq = sq_sum / n
    var_of_sq = max(quad_sum / n - mean_sq**2, 0.0) * n / (n - 1)
    se = math.sqrt(var_of_sq / n)
    return float(estimate), float(se)


@dataclass(frozen=True)
class BaselinePartition:
    """Per-state split into below-baseline and at-or-above-baseline actions."""

    b: float
    below: tuple[np.ndarray, ...]   # action indices with value < b
    above: tuple[np.ndarray, ...]   # action indices with value >= b
    max_below: float | None         # highest value among all below-baseline actions

    @property
    def defined(self) -> bool:
        return self.max_below is not None


def partition_actions(instance: MDPInstance, b: float) -> BaselinePartition:
    below, above = [], []
    max_below: float | None = None
    for q in instance.q_values:
        lo = np.flatnonzero(q < b)
        below.append(lo)
        above.append(np.flatnonzero(q >= b))
        if lo.size:
            state_max = float(q[lo].max())
            max_below = state_max if max_below is None else max(max_below, state_max)
    return BaselinePartition(b=b, below=tuple(below), above=tuple(above),
                             max_below=max_below)


def variance_decomposition(instance: MDPInstance, policy: SoftmaxPolicy,
                           b: float) -> tuple[float, float]:
    """Split the exact variance at constant baseline b into the contributions
    of below-baseline and at-or-above-baseline actions.  Both terms center on
    the global mean gradient, so they sum to the exact variance."""
    _check_enumerable(instance)
    part = partition_actions(instance, b)
    baseline = ConstantBaseline(b)
    mean = exact_gradient_mean(instance, policy, baseline)
    below_term = above_term = 0.0
    for s, rho in enumerate(instance.visitation):
        if rho == 0.0:
            continue
        probs, gradlog = _state_policy(instance, policy, s)
        g = gradlog * (instance.q_values[s] - b)[:, None]
        sq = ((g - mean) ** 2).sum(axis=1)
        below_term += rho * float(probs[part.below[s]] @ sq[part.below[s]])
        above_term += rho * float(probs[part.above[s]] @ sq[part.above[s]])
    return below_term, above_term


def _centered_gradlog_term(instance, policy, partition):
    """E over states of P(below) * E_below[||grad log pi - global mean||^2].

    The global mean of grad log pi is identically zero (score-function
    identity); both the centered and uncentered forms are computed and must
    agree.
    """
    _check_enumerable(instance)
    nu = np.zeros(policy.scorer.params.layout.size)
    cache = []
    for s, rho in enumerate(instance.visitation):
        probs, gradlog = _state_policy(instance, policy, s)
        cache.append((probs, gradlog))
        if rho > 0.0:
            nu += rho * (gradlog.T @ probs)
    centered = uncentered = 0.0
    for s, rho in enumerate(instance.visitation):
        if rho == 0.0:
            continue
        probs, gradlog = cache[s]
        lo = partition.below[s]
        centered += rho * float(probs[lo] @ ((gradlog[lo] - nu) ** 2).sum(axis=1))
        uncentered += rho * float(probs[lo] @ (gradlog[lo] ** 2).sum(axis=1))
    if not math.isclose(centered, uncentered, rel_tol=1e-9, abs_tol=1e-12):
        raise AssertionError(
            f"score-function identity violated: centered {centered} vs "
            f"uncentered {uncentered}"
        )
    return centered


def variance_lower_bound(instance: MDPInstance, policy: SoftmaxPolicy,
                         b: float, partition: BaselinePartition) -> float:
    """(max_below - b)^2 * E[P(below) * E_below[||grad log pi - mean||^2]].

    The partition is taken as given (its threshold need not equal b), which
    is what makes baseline sweeps at a frozen partition meaningful.  The
    equivalent factoring b^2 * (max_below / b - 1)^2 is computed alongside
    and asserted identical.
    """
    if not partition.defined:
        raise UndefinedBoundError(
            "no action is valued below the baseline; the bound anchor is undefined"
        )
    term = _centered_gradlog_term(instance, policy, partition)
    factor = (partition.max_below - b) ** 2
    if b != 0.0:
        alt_factor = b * b * (partition.max_below / b - 1.0) ** 2
        if not math.isclose(factor, alt_factor, rel_tol=1e-9, abs_tol=1e-15):
            raise AssertionError(
                f"bound factorings disagree: {factor} vs {alt_factor}"
            )
    return factor * term


@dataclass(frozen=True)
class BoundCheckReport:
    """Everything the bound derivation claims, evaluated exactly on one instance."""

    b: float
    exact_var: float
    below_term: float
    above_term: float
    below_mass: float
    max_below: float | None
    lower_bound: float | None
    pointwise_ok: bool          # (value - b)^2 >= (max_below - b)^2 on every below action
    holds_for_below_term: bool  # below_term >= lower_bound
    holds_for_total: bool       # exact_var >= lower_bound (assumes above mass negligible)

    @property
    def defined(self) -> bool:
        return self.lower_bound is not None


def verify_variance_bound(instance: MDPInstance, policy: SoftmaxPolicy,
                          b: float) -> BoundCheckReport:
    """Evaluate every step of the lower-bound chain on an enumerable instance.

    The comparison against the below-baseline term only uses the pull-out
    step; the comparison against the total variance additionally relies on
    the assumption that almost all probability mass sits on below-baseline
    actions, so both verdicts are reported separately.
    """
    part = partition_actions(instance, b)
    below_term, above_term = variance_decomposition(instance, policy, b)
    exact = below_term + above_term
    below_mass = 0.0
    pointwise_ok = True
    for s, rho in enumerate(instance.visitation):
        probs, _ = _state_policy(instance, policy, s)
        lo = part.below[s]
        below_mass += float(rho) * float(probs[lo].sum())
        if part.defined and lo.size:
            gaps = (instance.q_values[s][lo] - b) ** 2
            if np.any(gaps < (part.max_below - b) ** 2 - 1e-15):
                pointwise_ok = False
    if part.defined:
        bound = variance_lower_bound(instance, policy, b, part)
        holds_below = below_term >= bound - 1e-12
        holds_total = exact >= bound - 1e-12
    else:
        bound = None
        holds_below = holds_total = True
    return BoundCheckReport(
        b=b, exact_var=exact, below_term=below_term, above_term=above_term,
        below_mass=below_mass, max_below=part.max_below, lower_bound=bound,
        pointwise_ok=pointwise_ok, holds_for_below_term=holds_below,
        holds_for_total=holds_total,
    )


# -- sparsity study -----------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    """Controls the per-fraction synthetic task and the briefly trained model
    whose rewards fill the value table."""

    num_queries: int = 10
    pool_size: int = 1000
    feature_dim: int = 5
    noise_sigma: float = 0.0
    init_scale: float = 0.25
    train_epochs: int = 60
    learning_rate: float = 0.3
    batch_size: int = 8
    dns_k: int = 5
    b: float = 0.5
    reward_kind: str = "sigmoid"
    mc_samples: int = 100_000


@dataclass(frozen=True)
class StudyRow:
    fraction: float
    b: float
    max_below: float | None
    lower_bound: float | None
    exact_var: float
    mc_var: float
    mc_se: float
    below_mass: float


def study_instance(cfg: StudyConfig, fraction: float,
                   seed: int) -> tuple[MDPInstance, SoftmaxPolicy]:
    """One study point: a synthetic task at the given relevant-fraction, a
    hardest-negative-trained linear discriminator filling the value table,
    and a uniform policy over the pools.

    The document features depend only on the seed, so across fractions the
    pools are identical and only the labels (hence the trained model) change.
    At fraction 1.0 every pool is all-relevant, no negatives exist, and the
    model keeps its initialization, leaving rewards near one half.
    """
    spec = SyntheticSpec(
        num_queries=cfg.num_queries, pool_size=cfg.pool_size,
        relevant_fraction=fraction, feature_dim=cfg.feature_dim,
        noise_sigma=cfg.noise_sigma, seed=seed,
    )
    dataset, _ = synth_retrieval(spec)
    model = build_scorer("linear", {"feature_dim": cfg.feature_dim},
                         scale=cfg.init_scale, seed=seed)
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
        epochs_outer=max(cfg.train_epochs, 1), dns_k=cfg.dns_k, seed=seed,
    )
    rng = np.random.default_rng(seed)
    for epoch in range(1, cfg.train_epochs + 1):
        dns_epoch(model, dataset, train_cfg, rng, epoch)
    uniform = SoftmaxPolicy(
        build_scorer("linear", {"feature_dim": cfg.feature_dim}, zero=True),
        temperature=1.0,
    )
    return build_instance(dataset, model, cfg.reward_kind), uniform


def sparsity_vs_bound_study(fractions: Sequence[float], cfg: StudyConfig,
                            seed: int) -> list[StudyRow]:
    """For each relevant-fraction, build the same synthetic pool geometry,
    train a discriminator briefly on that fraction's labels, and report the
    bound anchor, the bound, and the exact and Monte-Carlo variances at the
    configured constant baseline under a uniform policy.
    """
    rows = []
    for fraction in fractions:
        instance, uniform = study_instance(cfg, fraction, seed)
        report = verify_variance_bound(instance, uniform, cfg.b)
        mc_var, mc_se = mc_variance(instance, uniform, ConstantBaseline(cfg.b),
                                    cfg.mc_samples, np.random.default_rng(seed))
        rows.append(StudyRow(
            fraction=fraction, b=cfg.b, max_below=report.max_below,
            lower_bound=report.lower_bound, exact_var=report.exact_var,
            mc_var=mc_var, mc_se=mc_se, below_mass=report.below_mass,
        ))
    return rows


def write_study_csv(rows: Sequence[StudyRow], path) -> None:
    """Column names follow the study's published CSV contract."""
    def opt(v):
        return v if v is not None else "undefined"

    write_csv(
        path,
        ("fraction", "b", "q_max", "bound_rhs", "exact_variance",
         "mc_variance", "mc_se", "p_a1"),
        ((r.fraction, r.b, opt(r.max_below), opt(r.lower_bound), r.exact_var,
          r.mc_var, r.mc_se, r.below_mass) for r in rows),
    )
