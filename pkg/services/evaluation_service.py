"""
Exact operating characteristics of test plans
Forward pass over the state lattice, a literal full-history oracle, and the truncatability diagnostic
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from config import Config
from core.errors import ValidationError, MalformedPlanError, NumericalGuardError
from core.logger import log_numerical_guard
from services.model_service import Lattice, is_bayesian, horizon_limit
from services.plan_service import check_plan_matches
from services.risk_service import stage_risk_integral, no_observation_risk

logger = logging.getLogger(__name__)

MIXTURE = "mixture"


@dataclass
class OperatingCharacteristics:
    """
    Rows are evaluation parameters: the k hypotheses then the ASN mixture
    accept[i, j] = P_i(accept H_j); the diagonal holds correct acceptance
    """
    parameters: List[str]
    accept: np.ndarray                 # (k + 1, k)
    asn: np.ndarray                    # (k + 1,)
    stop_mass_deficit: np.ndarray      # (k + 1,)
    stopping_distribution: np.ndarray  # (k + 1, horizon + 1)
    horizon: int
    randomized: bool = False
    lagrangian: Optional[float] = None

    @property
    def k(self):
        return self.accept.shape[1]

    @property
    def alpha(self):
        return self.accept[:self.k]

    @property
    def beta(self):
        alpha = self.alpha
        return alpha.sum(axis=1) - np.diag(alpha)

    @property
    def asn_weighted(self):
        return float(self.asn[self.k])

    def to_dict(self):
        k = self.k
        return {
            "parameters": list(self.parameters),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "mixture_accept": self.accept[k].tolist(),
            "asn": {name: float(v) for name, v in zip(self.parameters, self.asn)},
            "asn_weighted": self.asn_weighted,
            "lagrangian": self.lagrangian,
            "stop_mass_deficit": {name: float(v) for name, v in zip(self.parameters, self.stop_mass_deficit)},
            "horizon": self.horizon,
            "randomized": self.randomized,
        }


def lagrangian_value(asn_weighted, weights, alpha):
    """L = ASN under the mixture + sum_{i != j} lambda_ij alpha_ij"""
    return float(asn_weighted + np.sum(weights.matrix * alpha))


def _parameters(model):
    return list(model.hypotheses.thetas) + [MIXTURE]


def _finish(model, weights, accept, asn, deficit, distribution, horizon, randomized):
    oc = OperatingCharacteristics(
        parameters=_parameters(model),
        accept=accept,
        asn=asn,
        stop_mass_deficit=deficit,
        stopping_distribution=distribution,
        horizon=horizon,
        randomized=randomized,
    )
    if weights is not None:
        oc.lagrangian = lagrangian_value(oc.asn_weighted, weights, oc.alpha)
    return oc


def exact_oc(model, plan, weights=None, randomize_ties=False, horizon=None, lattice=None):
    """
    Forward pass propagating continuation path counts through the lattice
    Mass that has not stopped by `horizon` is reported as stop_mass_deficit
    """
    lattice = lattice or Lattice(model)
    check_plan_matches(plan, lattice)
    H = plan.horizon if horizon is None else horizon
    if not 0 <= H <= plan.horizon:
        raise ValidationError(f"Evaluation horizon {H} outside plan stages 0..{plan.horizon}")

    k = model.k
    accept = np.zeros((k + 1, k))
    asn = np.zeros(k + 1)
    distribution = np.zeros((k + 1, H + 1))
    deficit = np.zeros(k + 1)

    paths = np.ones(1)
    for n in range(H + 1):
        layout = lattice.stage(n)
        stage = plan.stage(n)
        masses = np.vstack([layout.densities, layout.asn[None, :]])
        psi = stage.stop_probability(randomize_ties)

        stopped = masses * (paths * psi)[None, :]
        accept += stopped @ stage.decision_weights(randomize_ties)
        distribution[:, n] = stopped.sum(axis=1)
        asn += n * distribution[:, n]

        carried = paths * (1.0 - psi)
        if n == H:
            deficit = masses @ carried
            break
        paths = np.zeros(lattice.stage(n + 1).size)
        np.add.at(paths, layout.successors.ravel(), np.repeat(carried, model.size))

    return _finish(model, weights, accept, asn, deficit, distribution, H, randomize_ties)


def _plan_index(plan):
    return [{label: idx for idx, label in enumerate(stage.labels)} for stage in plan.stages]


def oracle_oc(model, plan, N=None, weights=None, randomize_ties=False):
    """
    Enumerate every history of length <= N and apply the plan literally,
    summing (1 - psi_1)...(1 - psi_{n-1}) psi_n phi_n terms
    """
    N = plan.horizon if N is None else N
    if not 0 <= N <= plan.horizon:
        raise ValidationError(f"Oracle horizon {N} outside plan stages 0..{plan.horizon}")
    A = model.size
    total = sum(A ** n for n in range(N + 1))
    if total > Config.ORACLE_CAP:
        details = {"histories": total, "cap": Config.ORACLE_CAP}
        log_numerical_guard("oracle_cap", details)
        raise NumericalGuardError(f"Oracle would enumerate {total} histories (cap {Config.ORACLE_CAP})", details)

    k = model.k
    index = _plan_index(plan)
    psis = [stage.stop_probability(randomize_ties) for stage in plan.stages]
    phis = [stage.decision_weights(randomize_ties) for stage in plan.stages]

    accept = np.zeros((k + 1, k))
    asn = np.zeros(k + 1)
    distribution = np.zeros((k + 1, N + 1))
    deficit = np.zeros(k + 1)

    stack = [((), 1.0)]
    while stack:
        symbols, reach = stack.pop()
        n = len(symbols)
        label = _state_label(model, symbols)
        if label not in index[n]:
            raise MalformedPlanError(f"Plan has no action for state {label!r} at stage {n}")
        idx = index[n][label]
        masses = np.array([model.joint_density(i, symbols) for i in range(k)] + [model.asn_density(symbols)])

        weight = reach * psis[n][idx]
        accept += np.outer(masses * weight, phis[n][idx])
        distribution[:, n] += masses * weight
        asn += n * masses * weight

        carried = reach * (1.0 - psis[n][idx])
        if n == N:
            deficit += masses * carried
        elif carried > 0:
            stack.extend((symbols + (a,), carried) for a in range(A))

    return _finish(model, weights, accept, asn, deficit, distribution, N, randomize_ties)


def _state_label(model, symbols):
    if model.kind == "iid":
        return ",".join(str(int(c)) for c in np.bincount(np.asarray(symbols, dtype=np.int64), minlength=model.size))
    return "".join(str(s) for s in symbols)


@dataclass
class TruncatabilityReport:
    sequence: list
    threshold: float
    passed: bool
    bayesian: bool
    horizon: int

    def to_dict(self):
        return {
            "sequence": [{"n": n, "risk_integral": v} for n, v in self.sequence],
            "threshold": self.threshold,
            "passed": self.passed,
            "bayesian": self.bayesian,
            "horizon": self.horizon,
        }


def truncatability_diagnostic(model, weights, n_max=None, threshold=None, lattice=None):
    """
    Minimum weighted error sums of fixed-size tests for n = 1..n_max
    The problem looks truncatable when they fall below the threshold
    """
    n_max = n_max or Config.DIAGNOSTIC_HORIZON
    if n_max < 1:
        raise ValidationError("Diagnostic horizon must be >= 1")
    lattice = lattice or Lattice(model)
    horizon, guard = horizon_limit(model, n_max, lattice.state_cap)
    if horizon < 1:
        raise ValidationError(f"No diagnostic horizon >= 1 passes the numerical guards ({guard})")
    if guard:
        logger.info(f"Truncatability diagnostic shortened to n={horizon} ({guard})")

    sequence = [(n, stage_risk_integral(model, weights, n, lattice)) for n in range(1, horizon + 1)]
    if threshold is None:
        threshold = Config.DIAGNOSTIC_RATIO * no_observation_risk(weights)[0]
    bayesian = is_bayesian(model)
    passed = bayesian or sequence[-1][1] <= threshold
    return TruncatabilityReport(sequence, float(threshold), bool(passed), bayesian, horizon)
