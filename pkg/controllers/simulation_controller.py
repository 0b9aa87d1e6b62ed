"""
Simulate command: Monte Carlo validation of a stored design
"""

import logging
from datetime import datetime, timezone

from config import Config
from core.decorators import log_command, guarded
from core.errors import ValidationError
from controllers.evaluation_controller import design_inputs
from services.artifact_service import emit_artifacts, build_manifest, manifest_hash
from services.evaluation_service import exact_oc, MIXTURE
from services.simulation_service import run_monte_carlo

logger = logging.getLogger(__name__)

DEFAULT_REPLICATIONS = 10000


def parse_true_parameter(value, k):
    """1-based hypothesis number or "mixture" -> 0-based index or MIXTURE"""
    if value is None or value == MIXTURE:
        return MIXTURE
    try:
        index = int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"--true must be a hypothesis number 1..{k} or 'mixture', got {value!r}")
    if not 1 <= index <= k:
        raise ValidationError(f"--true must be in 1..{k}, got {index}")
    return index - 1


@log_command("simulate")
@guarded
def cmd_simulate(config, out_dir=None, design=None, reps=None, seed=None, true=None,
                 randomize_ties=None, threads=None, force=False, config_path=None):
    """Seeded simulation of a plan, compared against its exact characteristics"""
    started = datetime.now(timezone.utc)
    model, design, plan, weights = design_inputs(config, design)
    settings = dict(config.get("simulation") or {})
    overrides = {"replications": reps, "seed": seed, "true": true, "randomize_ties": randomize_ties}
    settings.update({key: value for key, value in overrides.items() if value is not None})

    replications = settings.get("replications", DEFAULT_REPLICATIONS)
    seed = settings.get("seed", 0)
    randomized = bool(settings.get("randomize_ties", design.get("randomized", False)))
    parameter = parse_true_parameter(settings.get("true", MIXTURE), model.k)

    reference = exact_oc(model, plan, weights, randomize_ties=randomized)
    report = run_monte_carlo(
        model, plan, parameter, replications, seed,
        randomize_ties=randomized,
        threads=threads or settings.get("threads"),
        reference=reference,
    )

    params = {
        "replications": replications,
        "true": MIXTURE if parameter == MIXTURE else parameter + 1,
        "randomize_ties": randomized,
        "block_size": report.block_size,
    }
    resolved = dict(config, design=design)
    manifest_id = manifest_hash("simulate", resolved, params, seeds=[seed])
    doc = {
        "schema": Config.SCHEMA_VERSION,
        "command": "simulate",
        "manifest_hash": manifest_id,
        "report": report.to_dict(),
        "exact": reference.to_dict(),
    }

    outputs = []
    if out_dir:
        files = {"simulation.json": doc}
        manifest = build_manifest("simulate", resolved, params, seeds=[seed], outputs=list(files),
                                  config_path=config_path, started=started)
        outputs = emit_artifacts(out_dir, files, manifest, force)

    return {"success": True, "simulation": doc, "outputs": outputs}, 0
