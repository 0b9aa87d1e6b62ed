"""
Seeded Monte Carlo execution of test plans
Replications run in fixed blocks with one Philox stream per block, so reports do not depend on threads
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import Config
from core.errors import ValidationError, MalformedPlanError
from services.evaluation_service import MIXTURE
from services.model_service import Lattice
from services.plan_service import check_plan_matches

logger = logging.getLogger(__name__)

AGREEMENT_SIGMAS = 3.0
EXACT_MATCH = 1e-12


def block_generator(seed, block):
    """Independent stream for replication block `block`"""
    return np.random.Generator(np.random.Philox(seed).jumped(block))


class PathSampler:
    """Draws the next symbol of many paths at once under one true parameter"""

    def __init__(self, model, true_parameter):
        self.model = model
        if true_parameter == MIXTURE:
            self.weights = np.asarray(model.asn_weights)
            sources = model.asn_pmfs if model.kind == "iid" else model.asn_tables
        else:
            i = model.check_index(true_parameter)
            self.weights = np.ones(1)
            sources = model.pmfs[i:i + 1] if model.kind == "iid" else [model.tables[i]]
        self.sources = sources

    def components(self, rng, size):
        if self.weights.size == 1:
            rng.random(size)
            return np.zeros(size, dtype=np.int64)
        cdf = np.cumsum(self.weights)
        u = rng.random(size)
        return np.minimum(np.searchsorted(cdf, u, side="right"), self.weights.size - 1)

    def symbols(self, u, component, codes, n):
        """Inverse-cdf draw; joint tables condition on the history code at stage n"""
        A = self.model.size
        if self.model.kind == "iid":
            cdf = np.cumsum(np.asarray(self.sources), axis=1)[component]
        else:
            probs = np.empty((u.size, A))
            for e, tables in enumerate(self.sources):
                rows = component == e
                if not np.any(rows):
                    continue
                nxt = tables[n + 1][codes[rows, None] * A + np.arange(A)[None, :]]
                probs[rows] = nxt / tables[n][codes[rows]][:, None]
            cdf = np.cumsum(probs, axis=1)
        return np.minimum((u[:, None] >= cdf).sum(axis=1), A - 1)


def _run_block(sampler, plan, lattice, seed, block, size, randomize_ties):
    rng = block_generator(seed, block)
    k = plan.k
    component = sampler.components(rng, size)
    idx = np.zeros(size, dtype=np.int64)
    alive = np.ones(size, dtype=bool)
    tau = np.zeros(size, dtype=np.int64)
    decision = np.zeros(size, dtype=np.int64)

    for n in range(plan.horizon + 1):
        stage = plan.stage(n)
        u_stop = rng.random(size)
        u_dec = rng.random(size)
        psi = stage.stop_probability(randomize_ties)
        stop = alive & (u_stop < psi[idx])
        if randomize_ties:
            counts = stage.ties.sum(axis=1)[idx]
            pick = np.floor(u_dec * counts).astype(np.int64)
            running = np.cumsum(stage.ties, axis=1)[idx]
            chosen = np.argmax(running > pick[:, None], axis=1)
        else:
            chosen = stage.accept[idx]
        decision[stop] = chosen[stop]
        tau[stop] = n
        alive &= ~stop
        if not np.any(alive):
            break
        if n == plan.horizon:
            raise MalformedPlanError(f"Paths continue past the last plan stage {n}")
        u_sym = rng.random(size)
        idx[alive] = lattice.stage(n).successors[
            idx[alive], sampler.symbols(u_sym[alive], component[alive], idx[alive], n)
        ]

    return {
        "accept": np.bincount(decision, minlength=k).astype(np.int64),
        "tau_sum": int(tau.sum()),
        "tau_sq_sum": int((tau * tau).sum()),
        "stopped_at": np.bincount(tau, minlength=plan.horizon + 1).astype(np.int64),
    }


@dataclass
class SimulationReport:
    parameter: str
    replications: int
    seed: int
    randomize_ties: bool
    block_size: int
    alpha: np.ndarray
    alpha_se: np.ndarray
    beta: Optional[float]
    beta_se: Optional[float]
    asn: float
    asn_se: float
    stopping_distribution: np.ndarray
    agreement: Optional[dict] = None

    def to_dict(self):
        return {
            "parameter": self.parameter,
            "replications": self.replications,
            "seed": self.seed,
            "randomize_ties": self.randomize_ties,
            "block_size": self.block_size,
            "alpha": self.alpha.tolist(),
            "alpha_se": self.alpha_se.tolist(),
            "beta": self.beta,
            "beta_se": self.beta_se,
            "asn": self.asn,
            "asn_se": self.asn_se,
            "stopping_distribution": self.stopping_distribution.tolist(),
            "agreement": self.agreement,
        }


def _agrees(estimate, se, exact):
    if se == 0:
        return bool(abs(estimate - exact) <= EXACT_MATCH)
    return bool(abs(estimate - exact) <= AGREEMENT_SIGMAS * se)


def agreement_flags(report, row, reference):
    """Compare a report against the exact characteristics of the same plan"""
    exact_alpha = reference.accept[row]
    flags = {
        "alpha": [_agrees(e, s, x) for e, s, x in zip(report.alpha, report.alpha_se, exact_alpha)],
        "asn": _agrees(report.asn, report.asn_se, reference.asn[row]),
    }
    if report.beta is not None:
        flags["beta"] = _agrees(report.beta, report.beta_se, reference.beta[row])
    flags["all"] = all(flags["alpha"]) and flags["asn"] and flags.get("beta", True)
    return flags


def run_monte_carlo(model, plan, true_parameter, replications, seed, randomize_ties=False,
                    threads=None, block_size=None, reference=None, lattice=None):
    """
    Simulate `replications` paths under a hypothesis index (0-based) or the ASN mixture
    and estimate acceptance probabilities and the ASN with standard errors
    """
    if isinstance(replications, bool) or not isinstance(replications, (int, np.integer)) or replications < 1:
        raise ValidationError(f"Replications must be an integer >= 1, got {replications!r}")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValidationError(f"Seed must be a nonnegative integer, got {seed!r}")
    threads = threads or Config.THREADS
    block_size = block_size or Config.MC_BLOCK
    if threads < 1 or block_size < 1:
        raise ValidationError("Threads and block size must be >= 1")

    lattice = lattice or Lattice(model)
    check_plan_matches(plan, lattice)
    sampler = PathSampler(model, true_parameter)
    row = model.k if true_parameter == MIXTURE else int(true_parameter)

    sizes = [min(block_size, replications - start) for start in range(0, replications, block_size)]
    logger.info(f"Simulating {replications} paths in {len(sizes)} blocks on {threads} threads")

    def work(block):
        return _run_block(sampler, plan, lattice, seed, block, sizes[block], randomize_ties)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(work, range(len(sizes))))

    accept = np.zeros(model.k, dtype=np.int64)
    stopped_at = np.zeros(plan.horizon + 1, dtype=np.int64)
    tau_sum = tau_sq_sum = 0
    for result in results:
        accept += result["accept"]
        stopped_at += result["stopped_at"]
        tau_sum += result["tau_sum"]
        tau_sq_sum += result["tau_sq_sum"]

    alpha = accept / replications
    alpha_se = np.sqrt(alpha * (1.0 - alpha) / replications)
    asn = tau_sum / replications
    if replications > 1:
        variance = max(tau_sq_sum - replications * asn * asn, 0.0) / (replications - 1)
        asn_se = math.sqrt(variance / replications)
    else:
        asn_se = 0.0

    beta = beta_se = None
    if true_parameter != MIXTURE:
        beta = float(1.0 - alpha[row])
        beta_se = float(math.sqrt(beta * (1.0 - beta) / replications))

    report = SimulationReport(
        parameter=MIXTURE if true_parameter == MIXTURE else model.hypotheses.thetas[row],
        replications=int(replications),
        seed=int(seed),
        randomize_ties=bool(randomize_ties),
        block_size=int(block_size),
        alpha=alpha,
        alpha_se=alpha_se,
        beta=beta,
        beta_se=beta_se,
        asn=float(asn),
        asn_se=float(asn_se),
        stopping_distribution=stopped_at / replications,
    )
    if reference is not None:
        report.agreement = agreement_flags(report, row, reference)
    return report
