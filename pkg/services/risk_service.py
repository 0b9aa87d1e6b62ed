"""
Weighted stopping risk and the optimal terminal decision rule
l_n = min_j sum_{i != j} lambda_ij f_i^n, with the full argmin tie set recorded
"""

import logging
from dataclasses import dataclass

import numpy as np

from config import Config
from core.errors import ValidationError
from services.model_service import Lattice

logger = logging.getLogger(__name__)

GENERAL = "general"
ROW_CONSTANT = "row_constant"


@dataclass(frozen=True)
class LagrangeWeights:
    """Multipliers lambda_ij >= 0 on the individual error probabilities; diagonal ignored"""
    matrix: np.ndarray
    problem_kind: str = GENERAL

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 2:
            raise ValidationError("Lagrange multipliers must form a k x k matrix with k >= 2")
        np.fill_diagonal(matrix, 0.0)
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            raise ValidationError("Lagrange multipliers must be finite and nonnegative")
        if self.problem_kind not in (GENERAL, ROW_CONSTANT):
            raise ValidationError(f"Unknown problem kind {self.problem_kind!r}")
        if self.problem_kind == ROW_CONSTANT:
            off = ~np.eye(matrix.shape[0], dtype=bool)
            rows = np.where(off, matrix, np.nan)
            if np.any(np.nanmax(rows, axis=1) != np.nanmin(rows, axis=1)):
                raise ValidationError("Row-constant multipliers need lambda_ij = lambda_i for all j")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def k(self):
        return self.matrix.shape[0]

    @property
    def rows(self):
        """lambda_i of a row-constant problem"""
        return self.matrix.sum(axis=1) / (self.k - 1)

    @classmethod
    def from_rows(cls, rows):
        rows = np.asarray(rows, dtype=float)
        matrix = np.repeat(rows[:, None], rows.size, axis=1)
        return cls(matrix, ROW_CONSTANT)

    @classmethod
    def from_bayes(cls, priors, losses):
        """lambda_ij = pi_i L_ij for a Bayes risk with prior pi and losses L"""
        priors = np.asarray(priors, dtype=float)
        losses = np.asarray(losses, dtype=float)
        if priors.ndim != 1 or losses.shape != (priors.size, priors.size):
            raise ValidationError("Bayes weights need k priors and a k x k loss matrix")
        return cls(priors[:, None] * losses)

    def scaled(self, factor):
        return LagrangeWeights(self.matrix * factor, self.problem_kind)

    def to_dict(self):
        if self.problem_kind == ROW_CONSTANT:
            return {"lambda_rows": self.rows.tolist()}
        return {"lambda": self.matrix.tolist()}


def load_weights(doc, k=None):
    """Parse {"lambda": [[...]...]}, {"lambda_rows": [...]} or {"bayes": {"priors": [...], "losses": [[...]...]}}"""
    if not isinstance(doc, dict):
        raise ValidationError("Weights must be a JSON object")
    if "bayes" in doc:
        bayes = doc["bayes"]
        if not isinstance(bayes, dict) or "priors" not in bayes:
            raise ValidationError("Bayes weights need 'priors' and optional 'losses'")
        priors = np.asarray(bayes["priors"], dtype=float)
        losses = bayes.get("losses")
        if losses is None:
            losses = 1.0 - np.eye(priors.size)
        weights = LagrangeWeights.from_bayes(priors, losses)
    elif "lambda_rows" in doc:
        weights = LagrangeWeights.from_rows(doc["lambda_rows"])
    elif "lambda" in doc:
        weights = LagrangeWeights(doc["lambda"])
    else:
        raise ValidationError("Weights need 'lambda', 'lambda_rows' or 'bayes'")
    if k is not None and weights.k != k:
        raise ValidationError(f"Weights are {weights.k} x {weights.k} but the model has {k} hypotheses")
    return weights


@dataclass(frozen=True)
class DecisionLabel:
    accept: int
    tie_set: tuple

    def __post_init__(self):
        if not self.tie_set or self.accept not in self.tie_set:
            raise ValidationError("Decision tie set must be nonempty and contain the accepted index")


def decision_sums(weights, densities):
    """sum_{i != j} lambda_ij f_i for every candidate j: (k, S)"""
    return weights.matrix.T @ densities


def stage_risk(weights, densities):
    """
    Vectorised stopping risk over a stage
    Returns l (S,), canonical accepted index (S,), tie mask (S, k)
    """
    sums = decision_sums(weights, densities)
    l_values = sums.min(axis=0)
    ties = (sums - l_values[None, :]) <= Config.TIE_RTOL * np.abs(l_values)[None, :]
    accept = np.argmax(ties, axis=0)
    return l_values, accept, ties.T


def _label(accept, ties_row):
    return DecisionLabel(int(accept), tuple(int(j) for j in np.flatnonzero(ties_row)))


def stop_risk(model, weights, state):
    """l_n at one state with its decision label"""
    densities = np.array([[model.joint_density(i, state)] for i in range(model.k)])
    l_values, accept, ties = stage_risk(weights, densities)
    return float(l_values[0]), _label(accept[0], ties[0])


def no_observation_risk(weights):
    """l_0 = min_j sum_{i != j} lambda_ij, the risk of deciding without data"""
    l_values, accept, ties = stage_risk(weights, np.ones((weights.k, 1)))
    return float(l_values[0]), _label(accept[0], ties[0])


def stage_risk_integral(model, weights, n, lattice=None):
    """
    Integral of l_n over all length-n histories: the minimum weighted error
    sum of a fixed-sample-size-n test
    """
    if n < 1:
        raise ValidationError("Stage risk integral needs n >= 1")
    lattice = (lattice or Lattice(model)).ensure(n)
    layout = lattice.stage(n)
    l_values, _, _ = stage_risk(weights, layout.densities)
    return float(layout.multiplicity @ l_values)
