"""
Decorators for command auditing and error-to-exit-code mapping
"""

import logging
import time
from functools import wraps
from core.errors import SeqOptError
from core.logger import log_action

logger = logging.getLogger(__name__)


def log_command(command):
    """
    Decorator to log every command invocation and its outcome
    """
    def decorator(f):
        @wraps(f)
        def wrapper(*args, **kwargs):
            started = time.perf_counter()
            log_action(command, "start")

            payload, exit_code = f(*args, **kwargs)

            log_action(
                command,
                "finish",
                extra_data={
                    "exit_code": exit_code,
                    "elapsed_s": round(time.perf_counter() - started, 6)
                }
            )
            return payload, exit_code
        return wrapper
    return decorator


def guarded(f):
    """
    Decorator mapping library exceptions to (payload, exit_code)
    """
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except SeqOptError as e:
            logger.error(f"{f.__name__} failed: {e.message}")
            return e.to_dict(), e.exit_code
        except Exception as e:
            logger.exception(f"{f.__name__} crashed: {e}")
            return {"success": False, "error": str(e), "error_type": type(e).__name__}, 1
    return wrapper


def http_status(exit_code):
    """HTTP status for a controller exit code"""
    return {0: 200, 2: 400, 3: 422, 4: 409}.get(exit_code, 500)


def log_api_call(f):
    """
    Decorator to log all API calls
    """
    @wraps(f)
    def wrapper(*args, **kwargs):
        from flask import request

        log_action(
            "api",
            f"API call: {request.method} {request.endpoint}",
            extra_data={"ip": request.remote_addr}
        )

        return f(*args, **kwargs)
    return wrapper
