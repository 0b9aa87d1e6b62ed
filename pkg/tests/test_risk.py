"""
Test cases for the stopping risk and decision labels
"""

import numpy as np
import pytest

from core.errors import ValidationError
from services.model_service import Alphabet, CountState, IidModel, Lattice
from services.risk_service import (
    LagrangeWeights, load_weights, stop_risk, no_observation_risk, stage_risk, stage_risk_integral,
)


def test_stop_risk_two_hypotheses():
    """l = min(lambda_21 f_2, lambda_12 f_1)"""
    model = IidModel(Alphabet(2), [[0.3, 0.7], [0.5, 0.5]], [[0.5, 0.5]], [1.0])
    weights = LagrangeWeights([[0.0, 10.0], [10.0, 0.0]])
    l_value, label = stop_risk(model, weights, CountState(2, (1, 1)))
    assert l_value == pytest.approx(2.1)
    assert label.accept == 1
    assert label.tie_set == (1,)


def test_stop_risk_three_hypotheses():
    weights = LagrangeWeights(np.ones((3, 3)))
    l_values, accept, ties = stage_risk(weights, np.array([[0.2], [0.5], [0.3]]))
    assert l_values[0] == pytest.approx(0.5)
    assert accept[0] == 1
    assert ties[0].tolist() == [False, True, False]


def test_exact_tie_keeps_full_set():
    weights = LagrangeWeights([[0.0, 1.0], [1.0, 0.0]])
    l_values, accept, ties = stage_risk(weights, np.array([[0.25], [0.25]]))
    assert l_values[0] == pytest.approx(0.25)
    assert accept[0] == 0
    assert ties[0].tolist() == [True, True]


def test_no_observation_risk():
    """Accepting H1 costs lambda_21, accepting H2 costs lambda_12"""
    l0, label = no_observation_risk(LagrangeWeights([[0.0, 0.4], [0.2, 0.0]]))
    assert l0 == pytest.approx(0.2)
    assert label.accept == 0

    l0, label = no_observation_risk(LagrangeWeights(2.0 * np.ones((3, 3))))
    assert l0 == pytest.approx(4.0)
    assert label.tie_set == (0, 1, 2)

    l0, _ = no_observation_risk(LagrangeWeights(np.zeros((2, 2))))
    assert l0 == 0.0


def test_stage_risk_integral_fixed_sample_error():
    """One observation, lambda = 1: best single-sample error sum"""
    model = IidModel(Alphabet(2), [[0.3, 0.7], [0.7, 0.3]], [[0.5, 0.5]], [1.0])
    weights = LagrangeWeights([[0.0, 1.0], [1.0, 0.0]])
    assert stage_risk_integral(model, weights, 1) == pytest.approx(0.6)


def test_stage_risk_integral_identical_hypotheses():
    model = IidModel(Alphabet(2), [[0.4, 0.6], [0.4, 0.6]], [[0.5, 0.5]], [1.0])
    weights = LagrangeWeights([[0.0, 1.0], [1.0, 0.0]])
    for n in (1, 2, 5):
        assert stage_risk_integral(model, weights, n) == pytest.approx(1.0)


def test_stage_risk_integral_decreasing(fixtures_k2):
    """More observations never raise the best fixed-sample risk"""
    for model, weights in fixtures_k2:
        lattice = Lattice(model)
        sequence = [stage_risk_integral(model, weights, n, lattice=lattice) for n in range(1, 21)]
        assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(sequence, sequence[1:]))


def test_risk_scales_with_weights(bernoulli_model, bernoulli_weights):
    state = CountState(3, (2, 1))
    base, label = stop_risk(bernoulli_model, bernoulli_weights, state)
    scaled, scaled_label = stop_risk(bernoulli_model, bernoulli_weights.scaled(3.5), state)
    assert scaled == pytest.approx(3.5 * base, rel=1e-12)
    assert scaled_label == label


def test_weights_validation():
    with pytest.raises(ValidationError):
        LagrangeWeights([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        LagrangeWeights([[0.0, 1.0, 2.0]])
    with pytest.raises(ValidationError):
        LagrangeWeights([[0.0, np.inf], [1.0, 0.0]])


def test_diagonal_is_ignored():
    weights = LagrangeWeights([[7.0, 1.0], [2.0, 9.0]])
    assert weights.matrix[0, 0] == 0.0 and weights.matrix[1, 1] == 0.0


def test_load_weights_variants():
    rows = load_weights({"lambda_rows": [3.0, 5.0, 7.0]}, k=3)
    assert rows.matrix[0, 2] == 3.0 and rows.matrix[2, 1] == 7.0
    assert rows.to_dict() == {"lambda_rows": [3.0, 5.0, 7.0]}

    bayes = load_weights({"bayes": {"priors": [0.25, 0.75]}})
    assert bayes.matrix.tolist() == [[0.0, 0.25], [0.75, 0.0]]

    with pytest.raises(ValidationError):
        load_weights({"lambda": [[0, 1], [1, 0]]}, k=3)
    with pytest.raises(ValidationError):
        load_weights({"priors": [0.5, 0.5]})


def test_row_constant_problem_rejects_uneven_rows():
    with pytest.raises(ValidationError):
        LagrangeWeights([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]], "row_constant")
