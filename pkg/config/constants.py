# config/constants.py
import math

# Tensor algebra
DEFAULT_MAX_LEVEL = 8
MAX_LEVEL_SMALL_DIM = 12  # hard cap when ambient_dim <= 4
MAX_LEVEL_LARGE_DIM = 8
SMALL_DIM = 4

# Finite differences (chart coordinates, one Richardson level each)
FD_STEP_1 = 1e-4
FD_STEP_2 = 1e-3
FD_STEP_3 = 1e-2

# Geodesics
RK4_STEP_FACTOR = 1e-3  # h <= factor * rho_M
SHOOTING_TOL = 1e-10
SHOOTING_MAX_ITER = 100
RETRACTION_TOL = 1e-10

# Signatures
GEODESIC_SAMPLES_PER_UNIT = 512

# Bridge sampling
DEFAULT_STEPS = 256
DRIFT_CLAMP_FRACTION = 0.25  # |drift| * h <= chart_radius / 4
SMALL_TIME_RADIUS_FRACTION = 0.9  # small-time drift needs d(x, y) < 0.9 rho_M
WRAPPED_IMAGES = 7
HEAT_SERIES_TERMS = 400  # sphere eigen-series cutoff
BLOCK_SIZE = 256  # paths per deterministic accumulation block

# Estimators
DISCARD_WARN_FRACTION = 0.01
DEFAULT_KAPPA = 1.0
T_MIN = 1e-4
CONDITION_LIMIT = 1e6
FIT_ORDERS = (2, 3, 4)  # t^2, t^3 and the t^4 nuisance term
DEFAULT_T_GRID = "0.02,0.04,0.06,0.08,0.1"  # loop lifetimes for the level-4 fit

# PDE
PDE_EPS_DEFAULT = 1e-3
PDE_EPS_MAX = 0.1
PDE_MIN_GRID = 64
TWO_PI = 2.0 * math.pi

# Discard policies
POLICY_DROP = "drop"
POLICY_KEEP = "keep-all"
DISCARD_POLICIES = [POLICY_DROP, POLICY_KEEP]

# Heat kernel modes
MODE_EXACT = "exact"
MODE_SMALL_TIME = "small_time"
HEAT_MODES = [MODE_EXACT, MODE_SMALL_TIME]

# Worker blocks
SIGNATURE_ENTRY_BUDGET = 4_000_000  # block_size * N^m stays below this
MIN_BLOCKS = 16  # jackknife groups for small runs
