"""
Configuration for the seqopt toolkit
Keeps all solver defaults, numerical guards and service URLs in one place
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

class Config:
    TOOL_VERSION = "1.0.0"
    SCHEMA_VERSION = 1

    # Runtime
    THREADS = int(os.getenv("SEQOPT_THREADS", "1"))
    LOG_LEVEL = os.getenv("SEQOPT_LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("SEQOPT_LOG_FILE", "")

    # Numerical tolerances
    PMF_TOLERANCE = 1e-12
    TIE_RTOL = 1e-9
    UNDERFLOW_FLOOR = 1e-280

    # Backward induction
    STATE_CAP = int(os.getenv("SEQOPT_STATE_CAP", "2000000"))
    N_START = int(os.getenv("SEQOPT_N_START", "4"))
    N_STEP = int(os.getenv("SEQOPT_N_STEP", "4"))
    N_MAX = int(os.getenv("SEQOPT_N_MAX", "512"))
    TOLERANCE = float(os.getenv("SEQOPT_TOLERANCE", "1e-8"))

    # Truncatability diagnostic
    DIAGNOSTIC_HORIZON = int(os.getenv("SEQOPT_DIAGNOSTIC_HORIZON", "128"))
    DIAGNOSTIC_RATIO = 1e-3  # verdict threshold relative to l0

    # Exact enumeration
    ORACLE_CAP = 10 ** 7

    # Monte Carlo
    MC_BLOCK = int(os.getenv("SEQOPT_MC_BLOCK", "4096"))

    # Calibration
    BRACKET = (1e-2, 1e6)
    CALIBRATION_SLACK = 0.02
    CALIBRATION_SWEEPS = int(os.getenv("SEQOPT_CALIBRATION_SWEEPS", "40"))
    BISECTION_RESOLUTION = 1e-4  # in decades of lambda
    FIXED_SAMPLE_MAX = 60

    # Celery
    REDIS_URL = os.getenv("REDIS_URL", "redis://localhost:6379/0")
    CELERY_BROKER_URL = REDIS_URL
    CELERY_RESULT_BACKEND = REDIS_URL
    CELERY_EAGER = os.getenv("SEQOPT_CELERY_EAGER", "0") == "1"
