"""
Test plans: per-stage stop/continue labels with terminal decision labels
"""

from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from core.errors import MalformedPlanError
from services.risk_service import DecisionLabel

CONTINUE = 0
STOP = 1

TRUNCATED = "truncated"
LIMIT = "limit"
TRIVIAL = "trivial"
CUSTOM = "custom"


@dataclass
class PlanStage:
    n: int
    labels: List[str]
    actions: np.ndarray       # (S,) STOP / CONTINUE
    boundary_tie: np.ndarray  # (S,) l within tolerance of the continuation cost
    accept: np.ndarray        # (S,) canonical decision
    ties: np.ndarray          # (S, k) decision tie sets

    @property
    def size(self):
        return len(self.labels)

    def decision(self, idx):
        return DecisionLabel(int(self.accept[idx]), tuple(int(j) for j in np.flatnonzero(self.ties[idx])))

    def stop_probability(self, randomize_ties=False):
        """psi per state; 1/2 at boundary ties when randomised"""
        psi = (self.actions == STOP).astype(float)
        if randomize_ties:
            psi[self.boundary_tie] = 0.5
        return psi

    def decision_weights(self, randomize_ties=False):
        """phi per state as an (S, k) matrix of acceptance probabilities"""
        if randomize_ties:
            ties = self.ties.astype(float)
            return ties / ties.sum(axis=1, keepdims=True)
        phi = np.zeros(self.ties.shape)
        phi[np.arange(self.size), self.accept] = 1.0
        return phi

    def to_dict(self):
        return {
            "stage": self.n,
            "states": [
                {
                    "state": label,
                    "action": "stop" if self.actions[idx] == STOP else "continue",
                    "boundary_tie": bool(self.boundary_tie[idx]),
                    "accept": int(self.accept[idx]) + 1,
                    "ties": [int(j) + 1 for j in np.flatnonzero(self.ties[idx])],
                }
                for idx, label in enumerate(self.labels)
            ],
        }

    @classmethod
    def from_dict(cls, doc, k):
        entries = doc["states"]
        ties = np.zeros((len(entries), k), dtype=bool)
        for idx, entry in enumerate(entries):
            for j in entry.get("ties") or [entry["accept"]]:
                if not 1 <= int(j) <= k:
                    raise MalformedPlanError(f"Stage {doc['stage']} lists tie index {j} outside 1..{k}")
                ties[idx, int(j) - 1] = True
        accept = np.array([entry["accept"] - 1 for entry in entries], dtype=np.int64)
        if np.any(accept < 0) or np.any(accept >= k) or not np.all(ties[np.arange(len(entries)), accept]):
            raise MalformedPlanError(f"Stage {doc['stage']} has decisions outside its tie sets")
        return cls(
            n=int(doc["stage"]),
            labels=[entry["state"] for entry in entries],
            actions=np.array([STOP if entry["action"] == "stop" else CONTINUE for entry in entries], dtype=np.int8),
            boundary_tie=np.array([bool(entry.get("boundary_tie", False)) for entry in entries]),
            accept=accept,
            ties=ties,
        )


@dataclass
class TestPlan:
    """A stopping rule over stages 0..horizon with its decision rule"""
    __test__ = False

    horizon: int
    plan_kind: str
    model_kind: str
    alphabet_size: int
    k: int
    stages: List[PlanStage] = field(default_factory=list)

    @property
    def effective_horizon(self):
        return self.horizon

    def stage(self, n):
        return self.stages[n]

    def with_kind(self, plan_kind):
        return replace(self, plan_kind=plan_kind)

    def stop_region(self, n):
        stage = self.stages[n]
        return [label for label, action in zip(stage.labels, stage.actions) if action == STOP]

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "plan_kind": self.plan_kind,
            "model_kind": self.model_kind,
            "alphabet": self.alphabet_size,
            "k": self.k,
            "stages": [stage.to_dict() for stage in self.stages],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            k = int(doc["k"])
            stages = [PlanStage.from_dict(stage, k) for stage in doc["stages"]]
            plan = cls(
                horizon=int(doc["horizon"]),
                plan_kind=doc["plan_kind"],
                model_kind=doc["model_kind"],
                alphabet_size=int(doc["alphabet"]),
                k=k,
                stages=stages,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedPlanError(f"Plan document is malformed: {e}")
        if [s.n for s in stages] != list(range(plan.horizon + 1)):
            raise MalformedPlanError("Plan stages must run 0..horizon without gaps")
        return plan

    @classmethod
    def trivial(cls, label, model):
        """Decide immediately without observations"""
        ties = np.zeros((1, model.k), dtype=bool)
        ties[0, list(label.tie_set)] = True
        root = ",".join(["0"] * model.size) if model.kind == "iid" else ""
        stage = PlanStage(
            n=0,
            labels=[root],
            actions=np.array([STOP], dtype=np.int8),
            boundary_tie=np.zeros(1, dtype=bool),
            accept=np.array([label.accept], dtype=np.int64),
            ties=ties,
        )
        return cls(0, TRIVIAL, model.kind, model.size, model.k, [stage])


def plan_from_actions(lattice, horizon, actions, accept, ties, plan_kind=CUSTOM):
    """
    Assemble a plan over an already built lattice from per-stage arrays
    (stage 0 first); boundary-tie flags are left clear
    """
    model = lattice.model
    lattice.ensure(horizon)
    stages = []
    for n in range(horizon + 1):
        layout = lattice.stage(n)
        stages.append(PlanStage(
            n=n,
            labels=layout.labels(),
            actions=np.asarray(actions[n], dtype=np.int8),
            boundary_tie=np.zeros(layout.size, dtype=bool),
            accept=np.asarray(accept[n], dtype=np.int64),
            ties=np.asarray(ties[n], dtype=bool),
        ))
    return TestPlan(horizon, plan_kind, model.kind, model.size, model.k, stages)


def check_plan_matches(plan, lattice):
    """Plan stages must list exactly the lattice states in canonical order"""
    model = lattice.model
    if plan.model_kind != model.kind or plan.alphabet_size != model.size or plan.k != model.k:
        raise MalformedPlanError(
            f"Plan for a {plan.model_kind} model (A={plan.alphabet_size}, k={plan.k}) "
            f"does not fit a {model.kind} model (A={model.size}, k={model.k})"
        )
    lattice.ensure(plan.horizon)
    for stage in plan.stages:
        layout = lattice.stage(stage.n)
        if stage.labels != layout.labels():
            raise MalformedPlanError(f"Plan stage {stage.n} references states absent from the model")
