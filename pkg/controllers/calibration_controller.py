"""
Calibrate command: search multipliers meeting error targets
"""

import logging
from datetime import datetime, timezone

from config import Config
from core.decorators import log_command, guarded
from core.errors import ValidationError
from controllers.design_controller import solver_settings, DESIGN_FILE
from services.artifact_service import emit_artifacts, build_manifest, manifest_hash, trace_frame
from services.calibration_service import load_target, fit_multipliers
from services.model_service import load_model

logger = logging.getLogger(__name__)


@log_command("calibrate")
@guarded
def cmd_calibrate(config, out_dir=None, mode=None, N=None, csv=False, force=False, config_path=None):
    """Fit multipliers, then write the calibration report and the final design"""
    started = datetime.now(timezone.utc)
    model = load_model(config["model"])
    if "targets" not in config:
        raise ValidationError("Calibration configuration needs 'targets'")
    target = load_target(config["targets"], model.k)
    solver_config = solver_settings(config, mode, N)

    result = fit_multipliers(model, target, solver_config)

    params = {"solver": solver_config.to_dict(), "target": target.to_dict()}
    manifest_id = manifest_hash("calibrate", config, params)
    report = {
        "schema": Config.SCHEMA_VERSION,
        "command": "calibrate",
        "manifest_hash": manifest_id,
        "result": result.to_dict(),
    }
    design = {
        "schema": Config.SCHEMA_VERSION,
        "command": "calibrate",
        "manifest_hash": manifest_id,
        "weights": result.weights.to_dict(),
        "plan": result.plan.to_dict(),
        "randomized": result.trivial,
    }

    outputs = []
    if out_dir:
        files = {"calibration.json": report, DESIGN_FILE: design}
        if csv and result.iterations:
            files["calibration_trace.csv"] = trace_frame(result.iterations)
        manifest = build_manifest("calibrate", config, params, outputs=list(files),
                                  config_path=config_path, started=started)
        outputs = emit_artifacts(out_dir, files, manifest, force)

    return {"success": True, "calibration": report, "design": design, "outputs": outputs}, 0
