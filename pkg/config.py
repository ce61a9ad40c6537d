"""
Configuration file for the concentration lab
Every value can be overridden from the environment or a .env file (prefix CONCLAB_)
"""

import os
from dotenv import load_dotenv

# Load overrides from .env if present
load_dotenv()


def _env_float(name, default):
    return float(os.environ.get(f"CONCLAB_{name}", default))


def _env_int(name, default):
    return int(os.environ.get(f"CONCLAB_{name}", default))


# Linear algebra tolerances
SYMMETRY_TOLERANCE = _env_float("SYMMETRY_TOLERANCE", 1e-12)  # Relative to max(1, max|entry|)
PSD_TOLERANCE = _env_float("PSD_TOLERANCE", 1e-10)  # Relative to the operator norm
JACOBI_TOLERANCE = _env_float("JACOBI_TOLERANCE", 1e-13)  # Off-diagonal Frobenius, relative
JACOBI_MAX_SWEEPS = _env_int("JACOBI_MAX_SWEEPS", 100)

# Unit vector handling
UNIT_TOLERANCE = _env_float("UNIT_TOLERANCE", 1e-10)  # Accepted as is
UNIT_RENORMALIZE_TOLERANCE = _env_float("UNIT_RENORMALIZE_TOLERANCE", 1e-6)  # Renormalized with a warning

# Tensor operator norm maximizer
TENSOR_RESTARTS = _env_int("TENSOR_RESTARTS", 32)  # Random starts, antipodes are added on top
TENSOR_TOLERANCE = _env_float("TENSOR_TOLERANCE", 1e-10)  # Iterate movement
TENSOR_MAX_ITERATIONS = _env_int("TENSOR_MAX_ITERATIONS", 10000)

# Experiments
DEFAULT_THREADS = _env_int("THREADS", 1)
TRUNCATION_DIRECTIONS = _env_int("TRUNCATION_DIRECTIONS", 16)  # Probed directions for trunc-moment-error
VIOLATION_SLACK_SE = _env_float("VIOLATION_SLACK_SE", 3.0)  # Binomial standard errors allowed
MOMENT_ORACLE_DRAWS = _env_int("MOMENT_ORACLE_DRAWS", 10_000_000)
PROGRESS_LOG_INTERVAL = _env_float("PROGRESS_LOG_INTERVAL", 5.0)  # Seconds between progress lines

# Reports
REPORT_SCHEMA_VERSION = "1"
REPORTS_DIR = os.environ.get(
    "CONCLAB_REPORTS_DIR",
    os.path.join(os.path.dirname(os.path.abspath(__file__)), "reports"),
)

# Logging
LOG_LEVEL = os.environ.get("CONCLAB_LOG_LEVEL", "INFO")
