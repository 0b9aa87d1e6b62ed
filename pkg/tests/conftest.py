"""
Shared fixtures: models, multipliers and run configurations
"""

import os

os.environ.setdefault("SEQOPT_CELERY_EAGER", "1")

import json

import numpy as np
import pytest

from services.model_service import Alphabet, IidModel, JointTableModel
from services.risk_service import LagrangeWeights

BERNOULLI_DOC = {
    "alphabet": 2,
    "hypotheses": [[0.7, 0.3], [0.3, 0.7]],
    "asn": {"pmf": [0.5, 0.5]},
}


def bernoulli():
    return IidModel(Alphabet(2), [[0.7, 0.3], [0.3, 0.7]], [[0.5, 0.5]], [1.0])


def markov_tables(stay, horizon, start=(0.5, 0.5)):
    """Joint tables of a two-state Markov chain with P(x_t = x_{t-1}) = stay"""
    tables = [np.ones(1), np.asarray(start, dtype=float)]
    for n in range(2, horizon + 1):
        prev = tables[-1]
        table = np.empty(2 ** n)
        for code in range(2 ** n):
            last, before = code & 1, (code >> 1) & 1
            table[code] = prev[code >> 1] * (stay if last == before else 1.0 - stay)
        tables.append(table)
    return tables


@pytest.fixture
def bernoulli_model():
    """p1 = (0.7, 0.3), p2 = (0.3, 0.7), ASN at q = (0.5, 0.5)"""
    return bernoulli()


@pytest.fixture
def bernoulli_weights():
    return LagrangeWeights([[0.0, 100.0], [100.0, 0.0]])


@pytest.fixture
def asymmetric_model():
    return IidModel(Alphabet(2), [[0.8, 0.2], [0.4, 0.6]], [[0.8, 0.2]], [1.0])


@pytest.fixture
def asymmetric_weights():
    return LagrangeWeights([[0.0, 30.0], [5.0, 0.0]])


@pytest.fixture
def bayes_model():
    """Three hypotheses, ASN averaged over the hypotheses with equal priors"""
    pmfs = [[0.8, 0.2], [0.5, 0.5], [0.2, 0.8]]
    return IidModel(Alphabet(2), pmfs, pmfs, [1 / 3, 1 / 3, 1 / 3])


@pytest.fixture
def bayes_weights():
    return LagrangeWeights.from_bayes([1 / 3, 1 / 3, 1 / 3], 60.0 * (1.0 - np.eye(3)))


@pytest.fixture
def three_way_model():
    return IidModel(Alphabet(2), [[0.9, 0.1], [0.6, 0.4], [0.3, 0.7]], [[0.5, 0.5]], [1.0])


@pytest.fixture
def three_way_weights():
    return LagrangeWeights([[0.0, 20.0, 40.0], [15.0, 0.0, 25.0], [30.0, 10.0, 0.0]])


@pytest.fixture
def ternary_model():
    return IidModel(Alphabet(3), [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]], [[1 / 3, 1 / 3, 1 / 3]], [1.0])


@pytest.fixture
def degenerate_model():
    """H1 never emits symbol 1"""
    return IidModel(Alphabet(2), [[1.0, 0.0], [0.4, 0.6]], [[0.7, 0.3]], [1.0])


@pytest.fixture
def markov_model():
    """Sticky versus switching two-state chains over six steps"""
    horizon = 6
    sticky = markov_tables(0.8, horizon)
    switching = markov_tables(0.3, horizon)
    return JointTableModel(Alphabet(2), horizon, [sticky, switching], [markov_tables(0.5, horizon)], [1.0])


@pytest.fixture
def symmetric_weights():
    return LagrangeWeights([[0.0, 50.0], [50.0, 0.0]])


@pytest.fixture
def fixtures_k2(bernoulli_model, bernoulli_weights, asymmetric_model, asymmetric_weights,
                degenerate_model, symmetric_weights):
    return [
        (bernoulli_model, bernoulli_weights),
        (asymmetric_model, asymmetric_weights),
        (degenerate_model, symmetric_weights),
    ]


@pytest.fixture
def all_fixtures(fixtures_k2, bayes_model, bayes_weights, three_way_model, three_way_weights,
                 ternary_model, symmetric_weights):
    return fixtures_k2 + [
        (bayes_model, bayes_weights),
        (three_way_model, three_way_weights),
        (ternary_model, symmetric_weights),
    ]


@pytest.fixture
def run_config(tmp_path):
    """Run configuration on disk with the model in a separate file"""
    (tmp_path / "model.json").write_text(json.dumps(BERNOULLI_DOC))
    config = {
        "model": "model.json",
        "weights": {"lambda": [[0, 100], [100, 0]]},
        "solver": {"mode": "truncated", "N": 3},
        "simulation": {"replications": 2000, "seed": 11, "true": 1},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    return path


@pytest.fixture
def inline_config():
    return {
        "model": dict(BERNOULLI_DOC),
        "weights": {"lambda": [[0, 100], [100, 0]]},
        "solver": {"mode": "truncated", "N": 3},
    }
