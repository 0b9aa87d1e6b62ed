"""
Evaluate command: exact operating characteristics of a stored design
"""

import logging
from datetime import datetime, timezone

import numpy as np

from config import Config
from core.decorators import log_command, guarded
from core.errors import ValidationError
from services.artifact_service import (
    emit_artifacts, build_manifest, manifest_hash, load_plan,
    stopping_distribution_frame, trace_frame,
)
from services.evaluation_service import exact_oc, oracle_oc
from services.model_service import load_model
from services.risk_service import load_weights

logger = logging.getLogger(__name__)


def design_inputs(config, design=None):
    """Model, plan and weights (config weights win over the design's own)"""
    model = load_model(config["model"])
    design = design if design is not None else config.get("design")
    if design is None:
        raise ValidationError("Configuration needs a 'design' (or pass --design)")
    plan = load_plan(design)
    weights_doc = config.get("weights") or design.get("weights")
    weights = load_weights(weights_doc, model.k) if weights_doc else None
    return model, design, plan, weights


@log_command("evaluate")
@guarded
def cmd_evaluate(config, out_dir=None, design=None, randomize_ties=None, csv=False, force=False, config_path=None):
    """Exact OC report for a plan, optionally cross-checked by full enumeration"""
    started = datetime.now(timezone.utc)
    model, design, plan, weights = design_inputs(config, design)
    settings = dict(config.get("evaluation") or {})
    if randomize_ties is not None:
        settings["randomize_ties"] = randomize_ties
    randomized = bool(settings.get("randomize_ties", design.get("randomized", False)))
    horizon = settings.get("horizon")

    oc = exact_oc(model, plan, weights, randomize_ties=randomized, horizon=horizon)
    params = {"randomize_ties": randomized, "horizon": horizon, "oracle": bool(settings.get("oracle", False))}
    manifest_id = manifest_hash("evaluate", dict(config, design=design), params)

    doc = {
        "schema": Config.SCHEMA_VERSION,
        "command": "evaluate",
        "manifest_hash": manifest_id,
        "plan_kind": plan.plan_kind,
        "plan_horizon": plan.horizon,
        "operating_characteristics": oc.to_dict(),
        "stopping_distribution": oc.stopping_distribution.tolist(),
    }
    if params["oracle"]:
        reference = oracle_oc(model, plan, horizon, weights, randomize_ties=randomized)
        doc["oracle_max_abs_diff"] = float(max(
            np.max(np.abs(oc.accept - reference.accept)),
            np.max(np.abs(oc.asn - reference.asn)),
        ))

    outputs = []
    if out_dir:
        files = {"evaluation.json": doc}
        if csv:
            files["stopping_distribution.csv"] = stopping_distribution_frame(oc)
            if design.get("trace"):
                files["trace.csv"] = trace_frame(design["trace"])
        manifest = build_manifest("evaluate", dict(config, design=design), params, outputs=list(files),
                                  config_path=config_path, started=started)
        outputs = emit_artifacts(out_dir, files, manifest, force)

    return {"success": True, "evaluation": doc, "outputs": outputs}, 0
