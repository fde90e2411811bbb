"""Shared test fixtures and independent numeric oracles.

The finite-difference oracle here is the reference implementation every
analytic gradient is checked against; it never calls any analytic gradient
code itself.
"""

import numpy as np
import pytest
from hypothesis import settings

from ranklab.core import Document, Judgment, build_dataset
from ranklab.dataio import SyntheticSpec, synth_retrieval

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fd_gradient(fn, values: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    theta = values.copy()
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        up = fn(theta)
        theta[i] = orig - h
        down = fn(theta)
        theta[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


def rel_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Norm-relative disagreement, with an absolute floor for near-zero grads."""
    denom = max(float(np.linalg.norm(reference)), 1e-8)
    return float(np.linalg.norm(analytic - reference)) / denom


def make_docs(features, prefix="d"):
    return [Document(id=f"{prefix}{i}", features=np.asarray(f, dtype=float))
            for i, f in enumerate(features)]


@pytest.fixture
def tiny_dataset():
    """Two queries, three docs each, one relevant per query."""
    rng = np.random.default_rng(5)
    pools = {}
    judgments = []
    for qid in ("qa", "qb"):
        docs = make_docs(rng.normal(size=(3, 4)), prefix=f"{qid}_d")
        pools[qid] = docs
        judgments.append(Judgment(qid, docs[0].id, 1))
    return build_dataset(pools, judgments, "synthetic")


@pytest.fixture
def planted_dataset():
    dataset, truth = synth_retrieval(
        SyntheticSpec(num_queries=12, pool_size=20, relevant_fraction=0.1,
                      feature_dim=6, noise_sigma=0.0, seed=11)
    )
    return dataset, truth
