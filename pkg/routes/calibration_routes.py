from flask import Blueprint, request, jsonify
from celery.result import AsyncResult
from celery_app import celery, calibrate_task, design_task
from controllers.calibration_controller import cmd_calibrate
from core.decorators import log_api_call, http_status
from core.errors import SeqOptError
from services.artifact_service import resolve_config, to_jsonable
import logging

logger = logging.getLogger(__name__)
calibration_bp = Blueprint("calibration", __name__)

TASKS = {"calibrate": calibrate_task, "design": design_task}


@calibration_bp.route("/calibrate", methods=["POST"])
@log_api_call
def calibrate():
    """Calibrate inline, or queue a job with ?async=1"""
    try:
        config = resolve_config(request.get_json(silent=True))
        if request.args.get("async") == "1":
            job = calibrate_task.delay(config)
            return jsonify({"job_id": job.id, "status": job.status}), 202
        payload, exit_code = cmd_calibrate(config)
        return jsonify(to_jsonable(payload)), http_status(exit_code)
    except SeqOptError as e:
        logger.error(f"Calibrate request rejected: {e.message}")
        return jsonify(e.to_dict()), e.http_status


@calibration_bp.route("/jobs/submit/<kind>", methods=["POST"])
@log_api_call
def submit_job(kind):
    """Queue a design or calibration job"""
    if kind not in TASKS:
        return jsonify({"success": False, "error": f"Unknown job kind {kind!r}"}), 404
    try:
        config = resolve_config(request.get_json(silent=True))
    except SeqOptError as e:
        return jsonify(e.to_dict()), e.http_status
    job = TASKS[kind].delay(config)
    return jsonify({"job_id": job.id, "status": job.status}), 202


@calibration_bp.route("/jobs/<job_id>", methods=["GET"])
@log_api_call
def job_status(job_id):
    try:
        job = AsyncResult(job_id, app=celery)
        response = {"job_id": job_id, "status": job.status}
        if job.successful():
            response["result"] = job.result
        elif job.failed():
            response["error"] = str(job.result)
        return jsonify(response)
    except Exception as e:
        logger.error(f"Job status error: {e}")
        return jsonify({"success": False, "error": "Failed to read job status"}), 500
