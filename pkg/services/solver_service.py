"""
Backward induction for optimal sequential tests
Solves truncated problems, passes to the horizon limit and checks the trivial test
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from config import Config
from core.errors import ValidationError, NotTruncatableError
from core.logger import log_design_decision
from services.model_service import Lattice, horizon_limit
from services.plan_service import TestPlan, PlanStage, STOP, CONTINUE, TRUNCATED, LIMIT
from services.risk_service import stage_risk, no_observation_risk
from services.evaluation_service import truncatability_diagnostic

logger = logging.getLogger(__name__)

TRUNCATED_MODE = "truncated"
LIMIT_MODE = "limit"


@dataclass
class StageValues:
    n: int
    l: np.ndarray       # stopping risk
    R: np.ndarray       # sum of next-stage values over the next symbol; nan at the horizon
    V: np.ndarray       # min(l, f_asn + R)
    f_asn: np.ndarray

    @property
    def continuation(self):
        return self.f_asn + self.R


@dataclass
class ValueTables:
    horizon: int
    stages: List[StageValues]
    value: float
    multiplicities: List[np.ndarray] = field(default_factory=list, repr=False)

    def stage(self, n):
        return self.stages[n]

    def aggregates(self):
        """Per-stage integrals of l and V over all histories"""
        return [
            {
                "stage": s.n,
                "risk_integral": float(m @ s.l),
                "value_integral": float(m @ s.V),
            }
            for s, m in zip(self.stages, self.multiplicities)
        ]


def solve_truncated(model, weights, N, lattice=None, state_cap=None):
    """
    Optimal test among those forced to stop by stage N
    Returns (ValueTables, TestPlan); the value is 1 + R_0
    """
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ValidationError(f"Horizon must be an integer >= 1, got {N!r}")
    if weights.k != model.k:
        raise ValidationError(f"Weights are {weights.k} x {weights.k} but the model has {model.k} hypotheses")
    lattice = (lattice or Lattice(model, state_cap)).ensure(int(N))

    values = [None] * (N + 1)
    stages = [None] * (N + 1)

    layout = lattice.stage(N)
    l_values, accept, ties = stage_risk(weights, layout.densities)
    values[N] = StageValues(N, l_values, np.full(layout.size, np.nan), l_values.copy(), layout.asn)
    stages[N] = PlanStage(
        n=N,
        labels=layout.labels(),
        actions=np.full(layout.size, STOP, dtype=np.int8),
        boundary_tie=np.zeros(layout.size, dtype=bool),
        accept=accept,
        ties=ties,
    )

    for m in range(N - 1, -1, -1):
        layout = lattice.stage(m)
        R = values[m + 1].V[layout.successors].sum(axis=1)
        l_values, accept, ties = stage_risk(weights, layout.densities)
        cost = layout.asn + R
        V = np.minimum(l_values, cost)
        boundary = np.abs(l_values - cost) <= Config.TIE_RTOL * np.maximum(l_values, cost)
        stop = (l_values <= cost) | boundary
        if m == 0:
            # every designed test takes at least one observation
            stop = np.zeros(layout.size, dtype=bool)
            boundary = np.zeros(layout.size, dtype=bool)
        values[m] = StageValues(m, l_values, R, V, layout.asn)
        stages[m] = PlanStage(
            n=m,
            labels=layout.labels(),
            actions=np.where(stop, STOP, CONTINUE).astype(np.int8),
            boundary_tie=boundary,
            accept=accept,
            ties=ties,
        )

    value = float(1.0 + values[0].R[0])
    tables = ValueTables(N, values, value, [lattice.stage(n).multiplicity for n in range(N + 1)])
    plan = TestPlan(N, TRUNCATED, model.kind, model.size, model.k, stages)
    logger.debug(f"Truncated solve at N={N}: value {value!r}")
    return tables, plan


def _regions_agree(plan, previous, upto):
    for m in range(1, upto + 1):
        if not np.array_equal(plan.stages[m].actions, previous.stages[m].actions):
            return False
    return True


@dataclass
class LimitResult:
    tables: ValueTables
    plan: TestPlan
    trace: list
    converged: bool
    stop_reason: str
    diagnostic: Optional[object] = None

    @property
    def value(self):
        return self.tables.value


def solve_limit(model, weights, tolerance=None, n_start=None, n_step=None, n_max=None,
                require_truncatable=True, state_cap=None, diagnostic_horizon=None, lattice=None):
    """
    Solve truncated problems for growing horizons until the value and the
    early stop regions settle; the last plan is returned as the limit plan
    """
    tolerance = Config.TOLERANCE if tolerance is None else tolerance
    n_start = n_start or Config.N_START
    n_step = n_step or Config.N_STEP
    n_max = n_max or Config.N_MAX
    if n_start < 1 or n_step < 1 or n_max < n_start:
        raise ValidationError(f"Invalid horizon schedule start={n_start} step={n_step} max={n_max}")
    if tolerance <= 0:
        raise ValidationError("Limit tolerance must be positive")

    lattice = lattice or Lattice(model, state_cap)
    diagnostic = truncatability_diagnostic(model, weights, n_max=diagnostic_horizon, lattice=lattice)
    if not diagnostic.passed:
        if require_truncatable:
            raise NotTruncatableError(
                "Stage risk integrals do not vanish; the problem does not look truncatable",
                details=diagnostic.to_dict(),
            )
        logger.warning("Truncatability diagnostic failed; continuing on request")

    cap, guard = horizon_limit(model, n_max, lattice.state_cap)
    if cap < 1:
        raise ValidationError(f"No horizon >= 1 passes the numerical guards ({guard})")
    horizons = list(range(n_start, cap + 1, n_step))
    if not horizons or horizons[-1] != cap:
        horizons.append(cap)

    trace = []
    previous = None
    converged = False
    for N in horizons:
        tables, plan = solve_truncated(model, weights, N, lattice=lattice)
        entry = {"N": N, "value": tables.value}
        if previous is not None:
            prev_tables, prev_plan = previous
            delta = prev_tables.value - tables.value
            agree = _regions_agree(plan, prev_plan, min(n_start, prev_plan.horizon - 1))
            entry.update({"delta": delta, "regions_agree": agree})
            converged = abs(delta) < tolerance and agree
        trace.append(entry)
        previous = (tables, plan)
        if converged:
            break

    if converged:
        stop_reason = "converged"
    else:
        stop_reason = guard or "n_max"
        logger.warning(f"Limit passage stopped without convergence at N={trace[-1]['N']} ({stop_reason})")

    tables, plan = previous
    log_design_decision({
        "mode": LIMIT_MODE,
        "value": tables.value,
        "horizon": tables.horizon,
        "converged": converged,
        "stop_reason": stop_reason,
    })
    return LimitResult(tables, plan.with_kind(LIMIT), trace, converged, stop_reason, diagnostic)


@dataclass
class TrivialityReport:
    l0: float
    design_value: float
    take_observations: bool
    decision: object

    def to_dict(self):
        return {
            "l0": self.l0,
            "design_value": self.design_value,
            "take_observations": self.take_observations,
            "immediate_decision": {
                "accept": self.decision.accept + 1,
                "ties": [j + 1 for j in self.decision.tie_set],
            },
        }


def triviality_check(weights, value):
    """Sampling only pays when deciding without data costs more than the design"""
    l0, label = no_observation_risk(weights)
    return TrivialityReport(l0, float(value), bool(l0 > value), label)


@dataclass
class SolverConfig:
    """How a design is solved: a fixed horizon or the horizon limit"""
    mode: str = LIMIT_MODE
    N: Optional[int] = None
    tolerance: float = Config.TOLERANCE
    n_start: int = Config.N_START
    n_step: int = Config.N_STEP
    n_max: int = Config.N_MAX
    require_truncatable: bool = True
    state_cap: Optional[int] = None
    diagnostic_horizon: Optional[int] = None

    def __post_init__(self):
        if self.mode not in (TRUNCATED_MODE, LIMIT_MODE):
            raise ValidationError(f"Unknown solver mode {self.mode!r}; use 'truncated' or 'limit'")
        if self.mode == TRUNCATED_MODE and self.N is None:
            raise ValidationError("Truncated mode needs a horizon N")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"Unknown solver settings: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as e:
            raise ValidationError(f"Invalid solver settings: {e}")

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    def solve(self, model, weights, lattice=None):
        """Returns a LimitResult for both modes; a truncated solve is always converged"""
        if self.mode == TRUNCATED_MODE:
            tables, plan = solve_truncated(model, weights, self.N, lattice=lattice, state_cap=self.state_cap)
            log_design_decision({"mode": TRUNCATED_MODE, "value": tables.value, "horizon": self.N})
            return LimitResult(tables, plan, [{"N": self.N, "value": tables.value}], True, "fixed_horizon")
        return solve_limit(
            model,
            weights,
            tolerance=self.tolerance,
            n_start=self.n_start,
            n_step=self.n_step,
            n_max=self.n_max,
            require_truncatable=self.require_truncatable,
            state_cap=self.state_cap,
            diagnostic_horizon=self.diagnostic_horizon,
            lattice=lattice,
        )
