"""
Numerical defaults, paths and logging setup for the toolkit.
"""

import logging
import os

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
OUTPUT_DIR = os.getenv("NONUNIQUE_OUTPUT_DIR", os.path.join(ROOT, "runs"))
LOG_LEVEL = os.getenv("NONUNIQUE_LOG_LEVEL", "INFO")
THREADS = int(os.getenv("NONUNIQUE_THREADS", "1"))

# Linear algebra
RANK_TOL = 1e-9
FD_STEP = 1e-6
SAMPLE_MARGIN_TOL = 1e-9

# Hulls
DEDUP_TOL = 1e-9
LAMBDA_SAMPLES = 7
SCREEN_THRESHOLD = 0.25

# Configuration search
SOLVER_MAX_ITER = 200
SOLVER_TOL = 1e-10
DELTA_MIN = 1e-6
NEWTON_MAX_ITER = 50
SEPARATION_MIN = 1e-3
SIGMA_ETA = 0.05
DIMENSION_RETRIES = 5

# Grids and constructions
MIN_RESOLUTION = 8
MIN_PERIOD_NODES = 8
DEFAULT_GROWTH = 2
MEASURE_SLACK = 0.05
NEST_LAYERS = 2

# Refinement
SAFETY = 0.9
MAX_REDUCTIONS = 400

# CLI-level grid bounds
GRID_MIN = 64
GRID_MAX = 4096

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | int | None = None) -> None:
    """Configure root logging once for command-line runs."""
    resolved = level if level is not None else LOG_LEVEL
    if isinstance(resolved, str):
        resolved = getattr(logging, resolved.upper(), logging.INFO)
    logging.basicConfig(level=resolved, format=LOG_FORMAT)
