"""
Calibration of Lagrange multipliers to prescribed error probabilities
Simultaneous log-scale bisection per multiplier, plus the fixed-sample benchmark for two hypotheses
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from config import Config
from core.errors import ValidationError, BracketingError, ConvergenceError, NotTruncatableError
from core.logger import log_design_decision
from services.evaluation_service import exact_oc, truncatability_diagnostic
from services.model_service import Lattice, horizon_limit
from services.plan_service import TestPlan, STOP
from services.risk_service import LagrangeWeights, no_observation_risk
from services.solver_service import SolverConfig

logger = logging.getLogger(__name__)

PROBLEM1 = "problem1"
PROBLEM2 = "problem2"


@dataclass
class CalibrationTarget:
    """Problem I bounds alpha_ij (k x k, diagonal ignored); Problem II bounds beta_i"""
    kind: str
    targets: np.ndarray
    slack: float = Config.CALIBRATION_SLACK

    def __post_init__(self):
        targets = np.array(self.targets, dtype=float)
        if self.kind == PROBLEM1:
            if targets.ndim != 2 or targets.shape[0] != targets.shape[1] or targets.shape[0] < 2:
                raise ValidationError("Problem I targets must be a k x k matrix")
            off = ~np.eye(targets.shape[0], dtype=bool)
            checked = targets[off]
            np.fill_diagonal(targets, np.nan)
        elif self.kind == PROBLEM2:
            if targets.ndim != 1 or targets.size < 2:
                raise ValidationError("Problem II targets must be a vector of length k")
            checked = targets
        else:
            raise ValidationError(f"Unknown calibration problem {self.kind!r}; use 'problem1' or 'problem2'")
        if not np.all((checked > 0) & (checked < 1)):
            raise ValidationError("Error targets must lie strictly between 0 and 1")
        if not 0 <= self.slack < 1:
            raise ValidationError("Calibration slack must be in [0, 1)")
        self.targets = targets

    @property
    def k(self):
        return self.targets.shape[0]

    @property
    def constraints(self):
        if self.kind == PROBLEM2:
            return [(i,) for i in range(self.k)]
        return [(i, j) for i in range(self.k) for j in range(self.k) if i != j]

    def bound(self, constraint):
        return float(self.targets[constraint])

    def achieved(self, oc, constraint):
        if self.kind == PROBLEM2:
            return float(oc.beta[constraint[0]])
        return float(oc.alpha[constraint])

    def weights(self, log_lambdas):
        values = 10.0 ** np.asarray(log_lambdas, dtype=float)
        if self.kind == PROBLEM2:
            return LagrangeWeights.from_rows(values)
        matrix = np.zeros((self.k, self.k))
        for (i, j), v in zip(self.constraints, values):
            matrix[i, j] = v
        return LagrangeWeights(matrix)

    def to_dict(self):
        if self.kind == PROBLEM2:
            return {"kind": self.kind, "beta": self.targets.tolist(), "slack": self.slack}
        targets = np.nan_to_num(self.targets, nan=0.0)
        return {"kind": self.kind, "alpha": targets.tolist(), "slack": self.slack}


def load_target(doc, k=None):
    """{"kind": "problem1", "alpha": [[...]]} or {"kind": "problem2", "beta": [...]}"""
    if not isinstance(doc, dict):
        raise ValidationError("Targets must be a JSON object")
    kind = doc.get("kind", PROBLEM1)
    key = "beta" if kind == PROBLEM2 else "alpha"
    if key not in doc:
        raise ValidationError(f"{kind} targets need '{key}'")
    target = CalibrationTarget(kind, doc[key], doc.get("slack", Config.CALIBRATION_SLACK))
    if k is not None and target.k != k:
        raise ValidationError(f"Targets cover {target.k} hypotheses but the model has {k}")
    return target


@dataclass
class FixedSampleBenchmark:
    n: Optional[int]
    alpha: Optional[list]
    searched_upto: int

    def to_dict(self):
        return {"n": self.n, "alpha": self.alpha, "searched_upto": self.searched_upto}


@dataclass
class CalibrationResult:
    target: CalibrationTarget
    weights: LagrangeWeights
    plan: TestPlan
    achieved: object
    binding: list
    gaps: dict
    iterations: list
    converged: bool
    trivial: bool = False
    tie_states: int = 0
    benchmark: Optional[FixedSampleBenchmark] = None
    solve: Optional[object] = field(default=None, repr=False)

    def to_dict(self):
        return {
            "target": self.target.to_dict(),
            "weights": self.weights.to_dict(),
            "achieved": self.achieved.to_dict(),
            "binding": [_constraint_name(c) for c in self.binding],
            "gaps": self.gaps,
            "iterations": self.iterations,
            "converged": self.converged,
            "trivial": self.trivial,
            "tie_states": self.tie_states,
            "fixed_sample_benchmark": self.benchmark.to_dict() if self.benchmark else None,
        }


def _constraint_name(constraint):
    if len(constraint) == 1:
        return f"beta_{constraint[0] + 1}"
    return f"alpha_{constraint[0] + 1}{constraint[1] + 1}"


def _tie_states(plan):
    """States where randomisation could move the errors: boundary ties and stopped decision ties"""
    count = 0
    for stage in plan.stages:
        stopped_ties = (stage.actions == STOP) & (stage.ties.sum(axis=1) > 1)
        count += int(np.count_nonzero(stage.boundary_tie | stopped_ties))
    return count


def _gaps(target, oc):
    return {_constraint_name(c): target.bound(c) - target.achieved(oc, c) for c in target.constraints}


def _binding(target, oc):
    return [c for c in target.constraints
            if target.achieved(oc, c) >= target.bound(c) * (1.0 - target.slack)]


def _feasible(target, oc):
    return all(target.achieved(oc, c) <= target.bound(c) * (1.0 + target.slack) for c in target.constraints)


def _trivial_result(model, target):
    """The uniformly randomised no-observation test, if it already meets every target"""
    k = model.k
    uniform = 1.0 / k
    if target.kind == PROBLEM1:
        ok = all(uniform <= target.bound(c) * (1.0 + target.slack) for c in target.constraints)
        weights = LagrangeWeights(np.full((k, k), 1.0 / (k - 1)))
    else:
        ok = all((k - 1) * uniform <= target.bound(c) * (1.0 + target.slack) for c in target.constraints)
        weights = LagrangeWeights.from_rows(np.full(k, 1.0 / (k - 1)))
    if not ok:
        return None
    _, label = no_observation_risk(weights)
    plan = TestPlan.trivial(label, model)
    achieved = exact_oc(model, plan, weights, randomize_ties=True)
    logger.info("Targets admit the no-observation test; returning it without sampling")
    return CalibrationResult(
        target=target,
        weights=weights,
        plan=plan,
        achieved=achieved,
        binding=_binding(target, achieved),
        gaps=_gaps(target, achieved),
        iterations=[],
        converged=True,
        trivial=True,
        tie_states=_tie_states(plan),
    )


class MultiplierSearch:
    """Cached evaluation of designs on a log10-lambda grid"""

    def __init__(self, model, target, solver_config):
        self.model = model
        self.target = target
        self.solver_config = solver_config
        self.lattice = Lattice(model, solver_config.state_cap)
        self.cache = {}
        self.trace = []

    def evaluate(self, log_lambdas, sweep):
        key = tuple(round(float(x), 10) for x in log_lambdas)
        fresh = key not in self.cache
        if fresh:
            weights = self.target.weights(log_lambdas)
            solve = self.solver_config.solve(self.model, weights, lattice=self.lattice)
            oc = exact_oc(self.model, solve.plan, weights, lattice=self.lattice)
            errors = [self.target.achieved(oc, c) for c in self.target.constraints]
            self.cache[key] = (weights, solve, oc, errors)
        weights, solve, oc, errors = self.cache[key]
        self.trace.append({
            "sweep": sweep,
            "log10_lambda": list(key),
            "achieved": errors,
            "asn": oc.asn_weighted,
            "value": solve.value,
            "horizon": solve.plan.horizon,
            "solver_converged": solve.converged,
            "feasible": _feasible(self.target, oc),
        })
        if fresh:
            self.check_monotone(key)
        return self.cache[key]

    def check_monotone(self, key):
        """
        Optimal designs at one horizon satisfy (W' - W) . (alpha' - alpha) <= 0 for any two weightings;
        a violation means the errors do not fall along the direction the search moved
        """
        weights, solve, oc, _ = self.cache[key]
        for other, (weights_o, solve_o, oc_o, _) in self.cache.items():
            if other == key or solve_o.plan.horizon != solve.plan.horizon:
                continue
            step = weights.matrix - weights_o.matrix
            change = float(np.sum(step * (oc.alpha - oc_o.alpha)))
            scale = float(np.sum(np.abs(step) * (np.abs(oc.alpha) + np.abs(oc_o.alpha))))
            scale += abs(oc.lagrangian or 0.0) + abs(oc_o.lagrangian or 0.0)
            if change > Config.TIE_RTOL * scale + 1e-12:
                raise BracketingError(
                    f"Achieved errors are not monotone between log10 lambda {list(other)} and {list(key)}",
                    details={"log10_lambda": [list(other), list(key)], "change": change},
                    trace=self.trace,
                )


def fit_multipliers(model, target, solver_config=None, benchmark=True):
    """
    Search multipliers so the optimal design meets the targets
    Every coordinate bisects its own bracket; all coordinates move together each sweep
    """
    if target.k != model.k:
        raise ValidationError(f"Targets cover {target.k} hypotheses but the model has {model.k}")
    solver_config = solver_config or SolverConfig()

    trivial = _trivial_result(model, target)
    if trivial is not None:
        log_design_decision({"calibration": "trivial", "kind": target.kind})
        return trivial

    if solver_config.require_truncatable:
        diagnostic = truncatability_diagnostic(
            model, target.weights(np.ones(len(target.constraints))), n_max=solver_config.diagnostic_horizon
        )
        if not diagnostic.passed:
            raise NotTruncatableError("Calibration needs a truncatable problem", details=diagnostic.to_dict())
    inner = SolverConfig(**dict(solver_config.to_dict(), require_truncatable=False))

    search = MultiplierSearch(model, target, inner)
    constraints = target.constraints
    lo = np.full(len(constraints), math.log10(Config.BRACKET[0]))
    hi = np.full(len(constraints), math.log10(Config.BRACKET[1]))

    _, _, _, errors_hi = search.evaluate(hi, sweep=0)
    failing = [_constraint_name(c) for c, e in zip(constraints, errors_hi) if e > target.bound(c) * (1.0 + target.slack)]
    if failing:
        raise BracketingError(
            f"Targets {failing} are not met even at lambda={Config.BRACKET[1]:g}",
            details={"achieved": errors_hi},
            trace=search.trace,
        )

    _, _, _, errors_lo = search.evaluate(lo, sweep=0)
    slack_at_lo = [_constraint_name(c) for c, e in zip(constraints, errors_lo) if e <= target.bound(c)]
    if slack_at_lo:
        logger.info(f"Targets {slack_at_lo} already met at lambda={Config.BRACKET[0]:g}")

    x = np.ones(len(constraints))
    converged = False
    for sweep in range(1, Config.CALIBRATION_SWEEPS + 1):
        _, _, oc, errors = search.evaluate(x, sweep)
        bounds = np.array([target.bound(c) for c in constraints])
        errors = np.asarray(errors)
        above = errors > bounds
        lo = np.where(above, x, lo)
        hi = np.where(above, hi, x)

        feasible = np.all(errors <= bounds * (1.0 + target.slack))
        settled = (errors >= bounds * (1.0 - target.slack)) | (hi - lo < Config.BISECTION_RESOLUTION)
        if feasible and np.all(settled):
            converged = True
            break
        if np.all(hi - lo < Config.BISECTION_RESOLUTION):
            break
        x = (lo + hi) / 2.0

    best = None
    for weights, solve, oc, _ in search.cache.values():
        if not _feasible(target, oc):
            continue
        if best is None or oc.asn_weighted < best[2].asn_weighted:
            best = (weights, solve, oc)
    if best is None:
        raise ConvergenceError("No feasible design found within the sweep cap", trace=search.trace)

    weights, solve, oc = best
    result = CalibrationResult(
        target=target,
        weights=weights,
        plan=solve.plan,
        achieved=oc,
        binding=_binding(target, oc),
        gaps=_gaps(target, oc),
        iterations=search.trace,
        converged=converged,
        tie_states=_tie_states(solve.plan),
        solve=solve,
    )
    if benchmark and model.k == 2:
        result.benchmark = fixed_sample_benchmark(model, target)

    log_design_decision({
        "calibration": target.kind,
        "converged": converged,
        "evaluations": len(search.cache),
        "asn": oc.asn_weighted,
        "weights": weights.to_dict(),
    })
    return result


def fixed_sample_benchmark(model, target, n_max=None):
    """
    Smallest fixed sample size whose best likelihood-ratio cutoff meets both
    targets of a two-hypothesis problem
    """
    if model.k != 2:
        raise ValidationError("The fixed-sample benchmark covers two hypotheses only")
    n_max, guard = horizon_limit(model, n_max or Config.FIXED_SAMPLE_MAX)
    if guard:
        logger.info(f"Fixed-sample sweep shortened to n={n_max} ({guard})")
    if target.kind == PROBLEM1:
        t12, t21 = target.bound((0, 1)), target.bound((1, 0))
    else:
        t12, t21 = target.bound((0,)), target.bound((1,))
    t12 *= 1.0 + target.slack
    t21 *= 1.0 + target.slack

    lattice = Lattice(model).ensure(n_max)
    for n in range(1, n_max + 1):
        layout = lattice.stage(n)
        f1 = layout.densities[0] * layout.multiplicity
        f2 = layout.densities[1] * layout.multiplicity
        # accept H2 on the states with the largest f2 / f1 first
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(f1 > 0, f2 / f1, np.inf)
        order = np.argsort(-ratio, kind="stable")
        alpha12 = np.concatenate([[0.0], np.cumsum(f1[order])])
        alpha21 = 1.0 - np.concatenate([[0.0], np.cumsum(f2[order])])
        ok = np.flatnonzero((alpha12 <= t12) & (alpha21 <= t21))
        if ok.size:
            cut = ok[0]
            return FixedSampleBenchmark(n, [float(alpha12[cut]), float(alpha21[cut])], n_max)
    return FixedSampleBenchmark(None, None, n_max)
