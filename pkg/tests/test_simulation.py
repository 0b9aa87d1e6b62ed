"""
Test cases for seeded Monte Carlo validation
"""

import numpy as np
import pytest

from core.errors import ValidationError, MalformedPlanError
from oracles import fixed_plan
from services.evaluation_service import exact_oc, MIXTURE
from services.model_service import Lattice
from services.simulation_service import run_monte_carlo, block_generator
from services.solver_service import solve_limit, solve_truncated


def test_estimates_agree_with_exact_values(bernoulli_model, bernoulli_weights):
    """Within three standard errors in at least 99% of seeded runs"""
    result = solve_limit(bernoulli_model, bernoulli_weights, n_max=200)
    lattice = Lattice(bernoulli_model)
    reference = exact_oc(bernoulli_model, result.plan, bernoulli_weights, lattice=lattice)

    agreeing = total = 0
    for seed in range(100):
        report = run_monte_carlo(bernoulli_model, result.plan, 0, 100_000, seed,
                                 reference=reference, lattice=lattice)
        flags = report.agreement
        entries = flags["alpha"] + [flags["asn"], flags["beta"]]
        agreeing += sum(entries)
        total += len(entries)
    assert agreeing >= 0.99 * total


def test_report_independent_of_threads(bernoulli_model, bernoulli_weights):
    _, plan = solve_truncated(bernoulli_model, bernoulli_weights, 12)
    one = run_monte_carlo(bernoulli_model, plan, 1, 5000, 3, threads=1, block_size=700)
    four = run_monte_carlo(bernoulli_model, plan, 1, 5000, 3, threads=4, block_size=700)
    assert one.to_dict() == four.to_dict()


def test_same_seed_same_report(bayes_model, bayes_weights):
    _, plan = solve_truncated(bayes_model, bayes_weights, 10)
    first = run_monte_carlo(bayes_model, plan, MIXTURE, 3000, 42)
    second = run_monte_carlo(bayes_model, plan, MIXTURE, 3000, 42)
    assert first.to_dict() == second.to_dict()
    assert first.beta is None
    assert run_monte_carlo(bayes_model, plan, MIXTURE, 3000, 43).to_dict() != first.to_dict()


def test_blocks_use_distinct_streams():
    assert block_generator(5, 0).random() != block_generator(5, 1).random()
    assert block_generator(5, 2).random() == block_generator(5, 2).random()


def test_deterministic_plan_has_zero_error(bernoulli_model):
    plan = fixed_plan(Lattice(bernoulli_model), 2, stop_from=1, decision=0)
    reference = exact_oc(bernoulli_model, plan)
    report = run_monte_carlo(bernoulli_model, plan, 1, 1000, 9, reference=reference)
    assert report.alpha.tolist() == [1.0, 0.0]
    assert report.alpha_se.tolist() == [0.0, 0.0]
    assert report.asn == 1.0 and report.asn_se == 0.0
    assert report.beta == 1.0
    assert report.agreement["all"]


def test_single_replication(bernoulli_model, bernoulli_weights):
    _, plan = solve_truncated(bernoulli_model, bernoulli_weights, 6)
    report = run_monte_carlo(bernoulli_model, plan, 0, 1, 17)
    assert report.asn == int(report.asn)
    assert report.asn_se == 0.0
    assert sorted(report.alpha.tolist()) == [0.0, 1.0]


def test_plan_that_never_stops(bernoulli_model):
    plan = fixed_plan(Lattice(bernoulli_model), 2, stop_from=5)
    with pytest.raises(MalformedPlanError):
        run_monte_carlo(bernoulli_model, plan, 0, 10, 1)


def test_invalid_arguments(bernoulli_model, bernoulli_weights):
    _, plan = solve_truncated(bernoulli_model, bernoulli_weights, 3)
    with pytest.raises(ValidationError):
        run_monte_carlo(bernoulli_model, plan, 0, 0, 1)
    with pytest.raises(ValidationError):
        run_monte_carlo(bernoulli_model, plan, 0, 10, -1)
    with pytest.raises(ValidationError):
        run_monte_carlo(bernoulli_model, plan, 2, 10, 1)


def _close(report, reference, row, sigmas=4.5):
    """Single-seed check with a wider band than the agreement flags"""
    for estimate, se, exact in zip(report.alpha, report.alpha_se, reference.accept[row]):
        assert abs(estimate - exact) <= sigmas * se + 1e-12
    assert abs(report.asn - reference.asn[row]) <= sigmas * report.asn_se + 1e-12


def test_randomized_ties_agree(bernoulli_model, symmetric_weights):
    _, plan = solve_truncated(bernoulli_model, symmetric_weights, 6)
    reference = exact_oc(bernoulli_model, plan, symmetric_weights, randomize_ties=True)
    report = run_monte_carlo(bernoulli_model, plan, 1, 50_000, 2024, randomize_ties=True)
    assert report.randomize_ties
    _close(report, reference, 1)


def test_joint_model_agrees(markov_model, symmetric_weights):
    _, plan = solve_truncated(markov_model, symmetric_weights, 6)
    reference = exact_oc(markov_model, plan, symmetric_weights)
    for parameter, row in ((0, 0), (1, 1), (MIXTURE, 2)):
        _close(run_monte_carlo(markov_model, plan, parameter, 40_000, 31), reference, row)


def test_mixture_sampling(bayes_model, bayes_weights):
    _, plan = solve_truncated(bayes_model, bayes_weights, 8)
    reference = exact_oc(bayes_model, plan, bayes_weights)
    report = run_monte_carlo(bayes_model, plan, MIXTURE, 40_000, 77)
    assert report.parameter == MIXTURE
    assert np.isclose(report.alpha.sum(), 1.0)
    _close(report, reference, 3)


def test_error_shrinks_with_replications(bernoulli_model, bernoulli_weights):
    """Mean absolute error over a fixed seed schedule falls as replications grow"""
    lattice = Lattice(bernoulli_model)
    _, plan = solve_truncated(bernoulli_model, bernoulli_weights, 12, lattice=lattice)
    reference = exact_oc(bernoulli_model, plan, bernoulli_weights, lattice=lattice)

    errors = []
    for replications in (1_000, 10_000, 100_000):
        total = 0.0
        for seed in range(10):
            report = run_monte_carlo(bernoulli_model, plan, 0, replications, seed, lattice=lattice)
            total += abs(report.asn - reference.asn[0])
            total += float(np.abs(report.alpha - reference.accept[0]).sum())
            if replications == 100_000:
                _close(report, reference, 0)
        errors.append(total / 10)
    assert errors[0] > errors[1] > errors[2]
