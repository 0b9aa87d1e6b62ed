"""
Audit logging with structured JSON entries
Entries go to stderr (and an optional log file) so reports on stdout stay clean
"""

import json
import logging
import sys
from datetime import datetime, timezone
from config import Config

# Configure logger
logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level=None, log_file=None):
    """Install stderr (and optional file) handlers on the root logger"""
    handlers = [logging.StreamHandler(sys.stderr)]
    log_file = log_file if log_file is not None else Config.LOG_FILE
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True
    )


def _timestamp():
    return datetime.now(timezone.utc).isoformat()


def log_action(command, action, extra_data=None):
    """
    Structured audit entry for a command or API call
    """
    log_entry = {
        "timestamp": _timestamp(),
        "command": command,
        "action": action,
        "extra_data": extra_data or {}
    }

    logger.info(f"Action: {json.dumps(log_entry, default=str)}")


def log_design_decision(decision_data):
    """Log solver and calibration outcomes"""
    log_entry = {
        "timestamp": _timestamp(),
        "type": "design_decision",
        "decision": decision_data
    }

    logger.info(f"Design Decision: {json.dumps(log_entry, default=str)}")


def log_numerical_guard(guard_type, details):
    """Log numerical guard trips (underflow, state cap, enumeration cap)"""
    log_entry = {
        "timestamp": _timestamp(),
        "type": "numerical_guard",
        "guard_type": guard_type,
        "details": details,
        "severity": "HIGH"
    }

    logger.critical(f"Numerical Guard: {json.dumps(log_entry, default=str)}")
