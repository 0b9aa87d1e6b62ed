"""
Process models for sequential testing over a finite alphabet
I.i.d. models reduce histories to symbol counts; joint-table models walk full histories
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import comb

from config import Config
from core.errors import ValidationError, UnderflowGuardError, StateCapError
from core.logger import log_numerical_guard

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Alphabet:
    """Symbols 0..size-1; the dominating measure is counting measure on them"""
    size: int

    def __post_init__(self):
        if isinstance(self.size, bool) or not isinstance(self.size, (int, np.integer)) or self.size < 2:
            raise ValidationError(f"Alphabet size must be an integer >= 2, got {self.size!r}")

    def check_symbol(self, symbol):
        if isinstance(symbol, bool) or not isinstance(symbol, (int, np.integer)) or not 0 <= symbol < self.size:
            raise ValidationError(f"Symbol {symbol!r} outside alphabet 0..{self.size - 1}")
        return int(symbol)


@dataclass(frozen=True)
class HypothesisSet:
    thetas: tuple

    def __post_init__(self):
        if len(self.thetas) < 2:
            raise ValidationError("At least two hypotheses are required")
        if len(set(self.thetas)) != len(self.thetas):
            raise ValidationError(f"Hypothesis labels must be distinct: {list(self.thetas)}")

    @property
    def k(self):
        return len(self.thetas)

    @classmethod
    def default(cls, k):
        return cls(tuple(f"H{i + 1}" for i in range(k)))


@dataclass(frozen=True)
class CountState:
    """Sufficient statistic of an i.i.d. history: symbol occurrence counts"""
    n: int
    counts: tuple

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValidationError(f"Counts must be nonnegative: {self.counts}")
        if sum(self.counts) != self.n:
            raise ValidationError(f"Counts {self.counts} do not sum to stage {self.n}")

    @property
    def label(self):
        return ",".join(str(c) for c in self.counts)


@dataclass(frozen=True)
class History:
    """A concrete observation history x_1..x_n"""
    symbols: tuple
    size: int

    @property
    def n(self):
        return len(self.symbols)

    @property
    def label(self):
        return "".join(str(s) for s in self.symbols)


def history_code(symbols, size):
    """Base-`size` code of a history, first symbol most significant"""
    code = 0
    for s in symbols:
        code = code * size + int(s)
    return code


def decode_history(code, n, size):
    symbols = []
    for _ in range(n):
        code, s = divmod(code, size)
        symbols.append(s)
    return tuple(reversed(symbols))


def _check_pmf_rows(rows, size, what):
    matrix = np.asarray(rows, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != size:
        raise ValidationError(f"{what} must be rows of length {size}")
    if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
        raise ValidationError(f"{what} must be finite and nonnegative")
    sums = matrix.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > Config.PMF_TOLERANCE)
    if bad.size:
        raise ValidationError(f"{what} row {int(bad[0]) + 1} sums to {sums[bad[0]]!r}, not 1")
    matrix.setflags(write=False)
    return matrix


def _check_mixture_weights(weights):
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ValidationError("ASN mixture must have at least one component")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValidationError("ASN mixture weights must be nonnegative")
    if abs(weights.sum() - 1.0) > Config.PMF_TOLERANCE:
        raise ValidationError(f"ASN mixture weights sum to {weights.sum()!r}, not 1")
    weights.setflags(write=False)
    return weights


class ProcessModel:
    """Common surface of the i.i.d. and joint-table models"""

    kind = None

    def __init__(self, alphabet, hypotheses, asn_weights):
        self.alphabet = alphabet
        self.hypotheses = hypotheses
        self.asn_weights = _check_mixture_weights(asn_weights)

    @property
    def k(self):
        return self.hypotheses.k

    @property
    def size(self):
        return self.alphabet.size

    @property
    def components(self):
        return self.asn_weights.size

    @property
    def max_horizon(self) -> Optional[int]:
        return None

    def check_index(self, i):
        if isinstance(i, bool) or not isinstance(i, (int, np.integer)) or not 0 <= i < self.k:
            raise ValidationError(f"Unknown hypothesis index {i!r} (k={self.k})")
        return int(i)


class IidModel(ProcessModel):
    kind = "iid"

    def __init__(self, alphabet, pmfs, asn_pmfs, asn_weights, hypotheses=None):
        pmfs = _check_pmf_rows(pmfs, alphabet.size, "Hypothesis pmf")
        hypotheses = hypotheses or HypothesisSet.default(pmfs.shape[0])
        if hypotheses.k != pmfs.shape[0]:
            raise ValidationError(f"{hypotheses.k} labels for {pmfs.shape[0]} hypotheses")
        super().__init__(alphabet, hypotheses, asn_weights)
        self.pmfs = pmfs
        self.asn_pmfs = _check_pmf_rows(asn_pmfs, alphabet.size, "ASN pmf")
        if self.asn_pmfs.shape[0] != self.components:
            raise ValidationError("ASN pmfs and weights differ in length")

    def counts_of(self, state):
        if isinstance(state, CountState):
            if len(state.counts) != self.size:
                raise ValidationError(f"Count state {state.counts} does not match alphabet size {self.size}")
            return np.asarray(state.counts, dtype=np.int64)
        symbols = state.symbols if isinstance(state, History) else tuple(state)
        checked = [self.alphabet.check_symbol(s) for s in symbols]
        return np.bincount(np.asarray(checked, dtype=np.int64), minlength=self.size)

    def joint_density(self, i, state):
        i = self.check_index(i)
        counts = self.counts_of(state)
        return float(np.prod(self.pmfs[i] ** counts))

    def asn_density(self, state):
        counts = self.counts_of(state)
        if counts.sum() == 0:
            return 1.0
        return float(self.asn_weights @ np.prod(self.asn_pmfs ** counts, axis=1))

    def stage_densities(self, counts):
        """(k, S) hypothesis densities and (E, S) ASN component densities"""
        densities = np.prod(self.pmfs[:, None, :] ** counts[None, :, :], axis=2)
        components = np.prod(self.asn_pmfs[:, None, :] ** counts[None, :, :], axis=2)
        return densities, components

    def smallest_mass(self):
        masses = np.concatenate([self.pmfs.ravel(), self.asn_pmfs.ravel()])
        return float(masses[masses > 0].min())


class JointTableModel(ProcessModel):
    kind = "joint"

    def __init__(self, alphabet, horizon, tables, asn_tables, asn_weights, hypotheses=None):
        if horizon < 1:
            raise ValidationError("Joint tables need a horizon of at least 1")
        hypotheses = hypotheses or HypothesisSet.default(len(tables))
        if hypotheses.k != len(tables):
            raise ValidationError(f"{hypotheses.k} labels for {len(tables)} joint tables")
        super().__init__(alphabet, hypotheses, asn_weights)
        self.horizon = int(horizon)
        self.tables = [self._check_tables(t, f"hypothesis {i + 1}") for i, t in enumerate(tables)]
        self.asn_tables = [self._check_tables(t, f"ASN component {e + 1}") for e, t in enumerate(asn_tables)]
        if len(self.asn_tables) != self.components:
            raise ValidationError("ASN tables and weights differ in length")

    @property
    def max_horizon(self):
        return self.horizon

    def _check_tables(self, tables, what):
        A = self.size
        if len(tables) != self.horizon + 1:
            raise ValidationError(f"Joint table for {what} must cover stages 0..{self.horizon}")
        checked = []
        for n, table in enumerate(tables):
            table = np.asarray(table, dtype=float)
            if table.shape != (A ** n,):
                raise ValidationError(f"Joint table for {what} at stage {n} must have {A ** n} entries")
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ValidationError(f"Joint table for {what} at stage {n} has negative mass")
            if abs(table.sum() - 1.0) > Config.PMF_TOLERANCE:
                raise ValidationError(f"Joint table for {what} at stage {n} sums to {table.sum()!r}")
            if n > 0:
                marginal = table.reshape(-1, A).sum(axis=1)
                if np.max(np.abs(marginal - checked[-1])) > Config.PMF_TOLERANCE:
                    raise ValidationError(
                        f"Joint table for {what}: stage {n} does not marginalize to stage {n - 1}"
                    )
            table.setflags(write=False)
            checked.append(table)
        return checked

    def code_of(self, state):
        if isinstance(state, CountState):
            raise ValidationError("Joint-table models are indexed by histories, not counts")
        symbols = state.symbols if isinstance(state, History) else tuple(state)
        checked = [self.alphabet.check_symbol(s) for s in symbols]
        if len(checked) > self.horizon:
            raise ValidationError(f"History of length {len(checked)} exceeds table horizon {self.horizon}")
        return len(checked), history_code(checked, self.size)

    def joint_density(self, i, state):
        i = self.check_index(i)
        n, code = self.code_of(state)
        return float(self.tables[i][n][code])

    def asn_density(self, state):
        n, code = self.code_of(state)
        if n == 0:
            return 1.0
        return float(sum(w * t[n][code] for w, t in zip(self.asn_weights, self.asn_tables)))

    def stage_densities(self, n):
        densities = np.vstack([t[n] for t in self.tables])
        components = np.vstack([t[n] for t in self.asn_tables])
        return densities, components

    def smallest_mass(self):
        masses = np.concatenate([t[-1] for t in self.tables + self.asn_tables])
        positive = masses[masses > 0]
        return float(positive.min()) if positive.size else 1.0


def joint_density(model, hypothesis_index, state):
    """f_{theta_i}^n at a count state or history; 1 for the empty history"""
    return model.joint_density(hypothesis_index, state)


def asn_density(model, state):
    """Mixture density sum_e pi_e f_e^n used as the sampling cost weight"""
    return model.asn_density(state)


def successors(state, alphabet_size=None):
    """The A one-step extensions of a state, in symbol order"""
    if isinstance(state, CountState):
        result = []
        for a in range(len(state.counts)):
            counts = list(state.counts)
            counts[a] += 1
            result.append((a, CountState(state.n + 1, tuple(counts))))
        return result
    if isinstance(state, History):
        return [(a, History(state.symbols + (a,), state.size)) for a in range(state.size)]
    if alphabet_size is None:
        raise ValidationError("Raw histories need an alphabet size to enumerate successors")
    return successors(History(tuple(state), alphabet_size))


def states_at_stage(model, n):
    """All states at stage n in canonical order"""
    if n < 0:
        raise ValidationError("Stage must be nonnegative")
    layout = Lattice(model).ensure(n).stage(n)
    return [layout.state(idx) for idx in range(layout.size)]


@dataclass
class StageLayout:
    """Vectorised view of one stage: states, densities and transitions"""
    n: int
    kind: str
    size_a: int
    states: np.ndarray          # (S, A) counts or (S,) history codes
    densities: np.ndarray       # (k, S)
    asn_components: np.ndarray  # (E, S)
    asn: np.ndarray             # (S,)
    multiplicity: np.ndarray    # (S,)
    successors: Optional[np.ndarray] = None  # (S, A) indices into stage n + 1
    _index: Optional[dict] = field(default=None, repr=False)
    _labels: Optional[list] = field(default=None, repr=False)

    @property
    def size(self):
        return self.states.shape[0]

    def label(self, idx):
        if self.kind == "iid":
            return ",".join(str(int(c)) for c in self.states[idx])
        return "".join(str(s) for s in decode_history(int(self.states[idx]), self.n, self.size_a))

    def labels(self):
        if self._labels is None:
            self._labels = [self.label(idx) for idx in range(self.size)]
        return self._labels

    def state(self, idx):
        if self.kind == "iid":
            return CountState(self.n, tuple(int(c) for c in self.states[idx]))
        return History(decode_history(int(self.states[idx]), self.n, self.size_a), self.size_a)

    def index_of(self, label):
        if self._index is None:
            self._index = {lab: idx for idx, lab in enumerate(self.labels())}
        if label not in self._index:
            raise ValidationError(f"State {label!r} does not exist at stage {self.n}")
        return self._index[label]


def count_states_upto(model, horizon):
    """Total number of lattice states over stages 0..horizon"""
    A = model.size
    if model.kind == "iid":
        return int(comb(horizon + A, A, exact=True))
    return sum(A ** m for m in range(horizon + 1))


def check_underflow(model, horizon):
    """Reject horizons whose density products could fall below the underflow floor"""
    p_min = model.smallest_mass()
    if model.kind == "iid":
        exponent = horizon * -math.log(p_min)
    else:
        exponent = -math.log(p_min)
    if exponent > -math.log(Config.UNDERFLOW_FLOOR):
        details = {"horizon": horizon, "min_mass": p_min, "floor": Config.UNDERFLOW_FLOOR}
        log_numerical_guard("underflow", details)
        raise UnderflowGuardError(
            f"Density products at horizon {horizon} may underflow (min mass {p_min:.3g})", details
        )


def max_safe_horizon(model):
    if model.kind != "iid":
        return model.max_horizon
    p_min = model.smallest_mass()
    if p_min >= 1.0:
        return None
    return int(-math.log(Config.UNDERFLOW_FLOOR) // -math.log(p_min))


UNDERFLOW = "underflow_guard"
TABLE_HORIZON = "table_horizon"
STATE_LIMIT = "state_cap"


def horizon_limit(model, wanted, state_cap=None):
    """
    Largest horizon <= wanted that passes every guard
    Returns (horizon, reason) where reason names the binding guard or is None
    """
    horizon, reason = wanted, None
    if model.max_horizon is not None and model.max_horizon < horizon:
        horizon, reason = model.max_horizon, TABLE_HORIZON
    safe = max_safe_horizon(model)
    if safe is not None and safe < horizon:
        horizon, reason = safe, UNDERFLOW
    cap = state_cap or Config.STATE_CAP
    while horizon > 0 and count_states_upto(model, horizon) > cap:
        horizon, reason = horizon - 1, STATE_LIMIT
    return horizon, reason


class Lattice:
    """
    Stage-by-stage state space of a model, extended on demand
    Stages share indices with the solver's value arrays
    """

    def __init__(self, model, state_cap=None):
        self.model = model
        self.state_cap = state_cap or Config.STATE_CAP
        self.stages = [self._root()]

    @property
    def horizon(self):
        return len(self.stages) - 1

    def stage(self, n):
        return self.stages[n]

    def ensure(self, horizon):
        if horizon <= self.horizon:
            return self
        model = self.model
        if model.max_horizon is not None and horizon > model.max_horizon:
            raise ValidationError(f"Horizon {horizon} exceeds joint table horizon {model.max_horizon}")
        total = count_states_upto(model, horizon)
        if total > self.state_cap:
            details = {"horizon": horizon, "states": total, "cap": self.state_cap}
            log_numerical_guard("state_cap", details)
            raise StateCapError(f"State space of {total} states exceeds cap {self.state_cap}", details)
        check_underflow(model, horizon)

        while self.horizon < horizon:
            self.stages.append(self._extend(self.stages[-1]))
        return self

    def _root(self):
        model = self.model
        k, E, A = model.k, model.components, model.size
        states = np.zeros((1, A), dtype=np.int64) if model.kind == "iid" else np.zeros(1, dtype=np.int64)
        return StageLayout(
            n=0,
            kind=model.kind,
            size_a=A,
            states=states,
            densities=np.ones((k, 1)),
            asn_components=np.ones((E, 1)),
            asn=np.ones(1),
            multiplicity=np.ones(1),
        )

    def _extend(self, prev):
        model = self.model
        A = model.size
        n = prev.n + 1

        if model.kind == "iid":
            candidates = (prev.states[:, None, :] + np.eye(A, dtype=np.int64)[None, :, :]).reshape(-1, A)
            unique, inverse = np.unique(candidates, axis=0, return_inverse=True)
            # descending lexicographic order: (n,0,..) first
            states = unique[::-1].copy()
            prev.successors = (len(unique) - 1 - np.asarray(inverse).reshape(-1)).reshape(prev.size, A)
            densities, components = model.stage_densities(states)
            multiplicity = _multinomial(states)
        else:
            states = np.arange(A ** n, dtype=np.int64)
            prev.successors = np.arange(prev.size, dtype=np.int64)[:, None] * A + np.arange(A)[None, :]
            densities, components = model.stage_densities(n)
            multiplicity = np.ones(states.shape[0])

        return StageLayout(
            n=n,
            kind=model.kind,
            size_a=A,
            states=states,
            densities=densities,
            asn_components=components,
            asn=model.asn_weights @ components,
            multiplicity=multiplicity,
        )


def _multinomial(counts):
    """n! / prod c_a! per row, as a product of binomial coefficients"""
    running = np.zeros(counts.shape[0], dtype=np.int64)
    result = np.ones(counts.shape[0])
    for a in range(counts.shape[1]):
        running = running + counts[:, a]
        result = result * comb(running, counts[:, a])
    return result


def expand_histories(model, horizon):
    """Equivalent joint-table model of an i.i.d. model, one table entry per history"""
    if model.kind != "iid":
        raise ValidationError("Only i.i.d. models can be expanded into joint tables")
    A = model.size

    def tables_for(pmf):
        tables = [np.ones(1)]
        for _ in range(horizon):
            tables.append((tables[-1][:, None] * pmf[None, :]).reshape(-1))
        return tables

    return JointTableModel(
        alphabet=model.alphabet,
        horizon=horizon,
        tables=[tables_for(p) for p in model.pmfs],
        asn_tables=[tables_for(q) for q in model.asn_pmfs],
        asn_weights=model.asn_weights,
        hypotheses=model.hypotheses,
    )


def is_bayesian(model):
    """True when the ASN mixture puts positive weight on every hypothesis and nothing else"""
    prior = np.zeros(model.k)
    for e in range(model.components):
        match = _matching_hypothesis(model, e)
        if match is None:
            return False
        prior[match] += model.asn_weights[e]
    return bool(np.all(prior > 0))


def _matching_hypothesis(model, e):
    for i in range(model.k):
        if model.kind == "iid":
            same = np.allclose(model.asn_pmfs[e], model.pmfs[i], rtol=0, atol=Config.PMF_TOLERANCE)
        else:
            same = all(
                np.allclose(a, b, rtol=0, atol=Config.PMF_TOLERANCE)
                for a, b in zip(model.asn_tables[e], model.tables[i])
            )
        if same:
            return i
    return None


def load_model(doc):
    """
    Build a model from its JSON document
    I.i.d.: {"alphabet": A, "hypotheses": [[p...]...], "asn": {...}}
    Joint: {"alphabet": A, "joint_tables": {"1": {"0": ..., "01": ...}, ...}, "asn": {...}}
    """
    if not isinstance(doc, dict):
        raise ValidationError("Model configuration must be a JSON object")
    if "alphabet" not in doc:
        raise ValidationError("Model configuration needs an 'alphabet' size")
    alphabet = Alphabet(doc["alphabet"])
    labels = doc.get("labels")

    if "joint_tables" in doc:
        return _load_joint_model(doc, alphabet, labels)
    if "hypotheses" not in doc:
        raise ValidationError("Model configuration needs 'hypotheses' or 'joint_tables'")

    pmfs = _check_pmf_rows(doc["hypotheses"], alphabet.size, "Hypothesis pmf")
    hypotheses = HypothesisSet(tuple(labels)) if labels else HypothesisSet.default(pmfs.shape[0])
    components = _asn_components(doc.get("asn"), pmfs.shape[0])

    asn_pmfs = []
    for component in components:
        if "hypothesis" in component:
            asn_pmfs.append(pmfs[_one_based(component["hypothesis"], pmfs.shape[0])])
        elif "pmf" in component:
            asn_pmfs.append(component["pmf"])
        else:
            raise ValidationError("I.i.d. ASN components need a 'pmf' or a 'hypothesis'")

    return IidModel(
        alphabet=alphabet,
        pmfs=pmfs,
        asn_pmfs=asn_pmfs,
        asn_weights=[c["weight"] for c in components],
        hypotheses=hypotheses,
    )


def _one_based(index, k):
    if isinstance(index, bool) or not isinstance(index, int) or not 1 <= index <= k:
        raise ValidationError(f"Hypothesis reference {index!r} must be in 1..{k}")
    return index - 1


def _asn_components(asn, k):
    if not isinstance(asn, dict):
        raise ValidationError("Model configuration needs an 'asn' section")
    if "bayes" in asn:
        priors = asn["bayes"]
        if len(priors) != k:
            raise ValidationError(f"'bayes' needs {k} prior weights")
        return [{"hypothesis": i + 1, "weight": w} for i, w in enumerate(priors)]
    if "mixture" in asn:
        components = asn["mixture"]
        if not components:
            raise ValidationError("ASN mixture must have at least one component")
        for component in components:
            if "weight" not in component:
                raise ValidationError("Each ASN mixture component needs a 'weight'")
        return components
    if "pmf" in asn or "joint_table" in asn or "hypothesis" in asn:
        return [dict(asn, weight=1.0)]
    raise ValidationError("ASN section needs 'mixture', 'bayes' or a single component")


def _load_joint_model(doc, alphabet, labels):
    A = alphabet.size
    if A > 10:
        raise ValidationError("Joint tables encode histories as digits, so the alphabet is limited to 10")
    raw_tables = doc["joint_tables"]
    if not isinstance(raw_tables, dict) or not raw_tables:
        raise ValidationError("'joint_tables' must map hypothesis numbers to tables")
    keys = sorted(raw_tables, key=lambda s: int(s))
    if keys != [str(i + 1) for i in range(len(keys))]:
        raise ValidationError("'joint_tables' keys must be 1..k")

    horizon = doc.get("horizon") or max(
        (len(h) for key in keys for h in raw_tables[key]), default=0
    )
    tables = [_parse_table(raw_tables[key], A, horizon, f"hypothesis {key}") for key in keys]
    k = len(tables)
    hypotheses = HypothesisSet(tuple(labels)) if labels else HypothesisSet.default(k)

    asn_tables = []
    components = _asn_components(doc.get("asn"), k)
    for component in components:
        if "hypothesis" in component:
            asn_tables.append(tables[_one_based(component["hypothesis"], k)])
        elif "joint_table" in component:
            asn_tables.append(_parse_table(component["joint_table"], A, horizon, "ASN component"))
        else:
            raise ValidationError("Joint ASN components need a 'joint_table' or a 'hypothesis'")

    return JointTableModel(
        alphabet=alphabet,
        horizon=horizon,
        tables=tables,
        asn_tables=asn_tables,
        asn_weights=[c["weight"] for c in components],
        hypotheses=hypotheses,
    )


def _parse_table(raw, A, horizon, what):
    """Digit-string keyed masses; stages with no entries are filled by marginalization"""
    given = {}
    for history, mass in raw.items():
        if not history or any(ch not in "0123456789"[:A] for ch in history):
            raise ValidationError(f"History {history!r} in {what} uses symbols outside the alphabet")
        if len(history) > horizon:
            raise ValidationError(f"History {history!r} in {what} exceeds horizon {horizon}")
        given.setdefault(len(history), {})[history] = float(mass)

    if horizon not in given:
        raise ValidationError(f"Joint table for {what} has no entries at the horizon {horizon}")

    tables = [None] * (horizon + 1)
    tables[0] = np.ones(1)
    for n in range(horizon, 0, -1):
        if n in given:
            table = np.zeros(A ** n)
            for history, mass in given[n].items():
                table[history_code((int(ch) for ch in history), A)] = mass
            tables[n] = table
        else:
            tables[n] = tables[n + 1].reshape(-1, A).sum(axis=1)
    return tables
