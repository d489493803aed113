"""
Centralized numeric defaults for dynlab.

Provides environment-backed defaults for tolerances, budgets, grid widths and
log level. Both the library and the CLI rely on these values; a YAML run file
or CLI flags override them per run (see ``dynlab.config``).
"""

from __future__ import annotations

import os


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.environ.get(name, str(default)))
    except (TypeError, ValueError):
        return default


def _env_float(name: str, default: float) -> float:
    try:
        return float(os.environ.get(name, str(default)))
    except (TypeError, ValueError):
        return default


# Reproducibility
SEED: int = _env_int("DYNLAB_SEED", 20240917)

# Comparison tolerances
TOL_NUM: float = _env_float("DYNLAB_TOL_NUM", 1e-12)
TOL_CYCLE: float = _env_float("DYNLAB_TOL_CYCLE", 1e-10)
TOL_MULT: float = _env_float("DYNLAB_TOL_MULT", 1e-6)
# Relative slack for interval inclusion tests f^p(J) ⊆ J
TOL_INCLUSION: float = _env_float("DYNLAB_TOL_INCLUSION", 1e-9)

# Orbit budgets
P_MAX: int = _env_int("DYNLAB_PMAX", 4096)
BUDGET: int = _env_int("DYNLAB_BUDGET", 1_000_000)
BURN_IN: int = _env_int("DYNLAB_BURN_IN", 10_000)
SAMPLES: int = _env_int("DYNLAB_SAMPLES", 10_000)
VISIT_MIN: int = _env_int("DYNLAB_VISIT_MIN", 50)
CASCADE_MIN: int = _env_int("DYNLAB_CASCADE_MIN", 5)
R_MIN: int = _env_int("DYNLAB_R_MIN", 20)

# Grid widths are 2**-exp * λ(M)
GRID_EXP: int = _env_int("DYNLAB_GRID_EXP", 20)
SUPPORT_EXP: int = _env_int("DYNLAB_SUPPORT_EXP", 12)
SIGNATURE_EXP: int = _env_int("DYNLAB_SIGNATURE_EXP", 10)
RECURRENCE_EXP: int = _env_int("DYNLAB_RECURRENCE_EXP", 10)
LAMBDA_EXP: int = _env_int("DYNLAB_LAMBDA_EXP", 10)

# Components lighter than this fraction of λ(M) are dropped
COMPONENT_MIN: float = _env_float("DYNLAB_COMPONENT_MIN", 1e-3)

# Homterval scan is exponential in the period; keep it bounded
HOMTERVAL_PMAX: int = _env_int("DYNLAB_HOMTERVAL_PMAX", 8)
MAX_LAPS: int = _env_int("DYNLAB_MAX_LAPS", 1 << 14)

# Worker threads (0 means one per logical core)
THREADS: int = _env_int("DYNLAB_THREADS", 0)

# Log level (string level, normalized to upper)
LOG_LEVEL: str = os.environ.get("DYNLAB_LOG_LEVEL", "WARNING").upper()
