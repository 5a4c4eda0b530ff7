__copyright__ = "Copyright (C) 2026 switchq developers"

# Environment Variables
LOG_LEVEL_ENV_VAR = "SWITCHQ_LOG_LEVEL"
OUT_DIR_ENV_VAR = "SWITCHQ_OUT_DIR"

LOG_FORMAT = (
    "%(asctime)s - %(levelname)-5s %(lineno)d "
    "%(filename)s:%(funcName)s - %(message)s"
)

# Problem validation
PROBABILITY_TOL = 1e-12
RANK_TOL = 1e-10
STATIONARY_RESIDUAL_TOL = 1e-10
EIGENVALUE_GAP_TOL = 1e-8
ZERO_MASS_TOL = 1e-13

# Enumeration limits
ENUMERATION_CAP = 10**6
PRODUCT_CAP = 10**7

# Fixed-point solver
SOLVER_TOL = 1e-12
SOLVER_MAX_ITER = 10_000
DIVERGENCE_FACTOR = 1e12

# Switching construction
DEGENERATE_SPREAD_TOL = 1e-14
LINEARIZATION_TOL = 1e-12
PAIRWISE_TOL = 1e-10
TRAJECTORY_TOL = 1e-12

# JSR / Lyapunov
DEFAULT_JSR_DEPTH = 6
DEFAULT_LYAP_DEPTH = 4
BRACKET_TOL = 1e-12
DRIFT_TOL = 1e-10
MESH_TOL = 1e-10

# CLI
DEFAULT_STEPS = 50
DEFAULT_RUNS = 1
DEFAULT_SEED = 0
DEFAULT_RESOLUTION = 64
DEFAULT_DRIFT_POINTS = 1000
CSV_FLOAT_FORMAT = "{:.17g}"
TABLE_FLOAT_FORMAT = "{:.4f}"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_CERTIFICATE_REFUSED = 4
