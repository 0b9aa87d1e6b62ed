"""
Celery configuration for long-running design and calibration jobs
"""

from celery import Celery
from config import Config
import logging

celery = Celery('seqopt')
celery.conf.update(
    broker_url=Config.CELERY_BROKER_URL,
    result_backend=Config.CELERY_RESULT_BACKEND,
    task_always_eager=Config.CELERY_EAGER,
    task_eager_propagates=True,
    task_serializer="json",
    result_serializer="json",
    accept_content=["json"],
)

logger = logging.getLogger(__name__)


def _job_result(payload, exit_code):
    from services.artifact_service import to_jsonable

    return {"exit_code": exit_code, "payload": to_jsonable(payload)}


@celery.task
def design_task(config):
    """Background design run; config is an inline run configuration"""
    from controllers.design_controller import cmd_design

    payload, exit_code = cmd_design(config)
    logger.info(f"Background design completed with exit code {exit_code}")
    return _job_result(payload, exit_code)


@celery.task
def calibrate_task(config):
    """Background calibration run"""
    from controllers.calibration_controller import cmd_calibrate

    payload, exit_code = cmd_calibrate(config)
    logger.info(f"Background calibration completed with exit code {exit_code}")
    return _job_result(payload, exit_code)
