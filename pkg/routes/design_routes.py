from flask import Blueprint, request, jsonify
from controllers.design_controller import cmd_design
from controllers.evaluation_controller import cmd_evaluate
from controllers.simulation_controller import cmd_simulate
from core.decorators import log_api_call, http_status
from core.errors import SeqOptError
from services.artifact_service import resolve_config, to_jsonable
import logging

logger = logging.getLogger(__name__)
design_bp = Blueprint("design", __name__)


def _config():
    """Request body as a run configuration; referenced files are not allowed over HTTP"""
    return resolve_config(request.get_json(silent=True))


def _respond(payload, exit_code):
    return jsonify(to_jsonable(payload)), http_status(exit_code)


@design_bp.route("/design", methods=["POST"])
@log_api_call
def design():
    try:
        return _respond(*cmd_design(_config()))
    except SeqOptError as e:
        logger.error(f"Design request rejected: {e.message}")
        return jsonify(e.to_dict()), e.http_status


@design_bp.route("/evaluate", methods=["POST"])
@log_api_call
def evaluate():
    try:
        return _respond(*cmd_evaluate(_config()))
    except SeqOptError as e:
        logger.error(f"Evaluate request rejected: {e.message}")
        return jsonify(e.to_dict()), e.http_status


@design_bp.route("/simulate", methods=["POST"])
@log_api_call
def simulate():
    try:
        return _respond(*cmd_simulate(_config()))
    except SeqOptError as e:
        logger.error(f"Simulate request rejected: {e.message}")
        return jsonify(e.to_dict()), e.http_status
