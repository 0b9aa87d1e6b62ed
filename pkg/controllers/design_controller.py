"""
Design command: solve for the optimal test and write the design artifact
"""

import logging
from datetime import datetime, timezone

from config import Config
from core.decorators import log_command, guarded
from core.errors import ValidationError
from services.artifact_service import (
    emit_artifacts, build_manifest, manifest_hash, design_summary,
    value_tables_frame, trace_frame,
)
from services.evaluation_service import exact_oc
from services.model_service import load_model, Lattice
from services.risk_service import load_weights
from services.solver_service import SolverConfig, triviality_check

logger = logging.getLogger(__name__)

DESIGN_FILE = "design.json"
SUMMARY_FILE = "summary.txt"


def solver_settings(config, mode=None, N=None):
    settings = dict(config.get("solver") or {})
    if mode is not None:
        settings["mode"] = mode
    if N is not None:
        settings["N"] = N
    return SolverConfig.from_dict(settings)


def build_design(model, weights, solver_config, manifest_id, lattice=None):
    """Design artifact document plus the objects the summary needs"""
    lattice = lattice or Lattice(model, solver_config.state_cap)
    result = solver_config.solve(model, weights, lattice=lattice)
    triviality = triviality_check(weights, result.value)
    oc = exact_oc(model, result.plan, weights, lattice=lattice)
    doc = {
        "schema": Config.SCHEMA_VERSION,
        "command": "design",
        "manifest_hash": manifest_id,
        "weights": weights.to_dict(),
        "solver": solver_config.to_dict(),
        "plan": result.plan.to_dict(),
        "value": result.value,
        "stage_aggregates": result.tables.aggregates(),
        "trace": result.trace,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "diagnostic": result.diagnostic.to_dict() if result.diagnostic else None,
        "triviality": triviality.to_dict(),
        "operating_characteristics": oc.to_dict(),
    }
    return doc, result, triviality, oc


@log_command("design")
@guarded
def cmd_design(config, out_dir=None, mode=None, N=None, csv=False, force=False, config_path=None):
    """Run the solver per the configured mode and report the design"""
    started = datetime.now(timezone.utc)
    model = load_model(config["model"])
    if "weights" not in config:
        raise ValidationError("Design configuration needs 'weights'")
    weights = load_weights(config["weights"], model.k)
    solver_config = solver_settings(config, mode, N)

    params = {"solver": solver_config.to_dict()}
    manifest_id = manifest_hash("design", config, params)
    doc, result, triviality, oc = build_design(model, weights, solver_config, manifest_id)
    summary = design_summary(result.plan, result.value, triviality, result.converged, result.stop_reason, oc,
                             manifest_id)

    outputs = []
    if out_dir:
        files = {DESIGN_FILE: doc, SUMMARY_FILE: summary}
        if csv:
            files["value_tables.csv"] = value_tables_frame(result.tables, result.plan)
            files["trace.csv"] = trace_frame(result.trace)
        manifest = build_manifest("design", config, params, outputs=list(files),
                                  config_path=config_path, started=started)
        outputs = emit_artifacts(out_dir, files, manifest, force)

    exit_code = 0 if result.converged else 4
    return {"success": result.converged, "design": doc, "summary": summary, "outputs": outputs}, exit_code
