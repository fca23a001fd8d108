import math

FORMAT = '%(levelname)s %(asctime)-15s %(name)-20s %(message)s'

# Tolerances
BLOCH_TOL = 1e-9
NULL_SPACE_TOL = 1e-10
AMBIGUOUS_RANK_FACTOR = 10.0
IMAG_TOL = 1e-12
FD_STEP = 1e-6
VERIFY_FD_STEP = 1e-5
EPS_SING = 1e-6
P_FLOOR = 1e-300
QUAD_REL_TOL = 1e-10
QUAD_LIMIT = 200
SINGULAR_DET_TOL = 1e-14
# entropy steps starting where det D / (tr D / N)^N < EPS_SING_NEIGHBOURHOOD * dt are flagged
EPS_SING_NEIGHBOURHOOD = 1e-3
# entropy steps whose (u_end - u) . dx exceeds this many k_B are flagged as unresolved
UNRESOLVED_STEP_TOL = 1.0

# Integration
DT = 1e-3
STEPS = 10000
SEED = 12345
RECORD_STRIDE = 1
NTRAJ = 50
WORKERS = 1
TRACES = 10
ENSEMBLE_CHUNK = 64
RNG_ALGORITHM = "numpy-Philox4x64-10"

# Models and frames
MODELS = ["raising-lowering", "weighted", "pure-z", "pure-theta", "multiplicative"]
FRAMES = ["xyz", "xz", "z", "theta", "x"]
MODEL_FRAMES = {
    "raising-lowering": ["xyz", "xz"],
    "weighted": ["xyz"],
    "pure-z": ["z"],
    "pure-theta": ["theta"],
    "multiplicative": ["x"],
}
DEFAULT_FRAME = {
    "raising-lowering": "xyz",
    "weighted": "xyz",
    "pure-z": "z",
    "pure-theta": "theta",
    "multiplicative": "x",
}
DEFAULT_INIT = {
    "xyz": (0.5, 0.5, 0.5),
    "xz": (0.5, 0.5),
    "z": (0.5,),
    "theta": (math.pi / 3,),
    "x": (1.0,),
}
ENTROPY_METHODS = ["none", "general", "closed-form-z", "closed-form-theta"]
DEFAULT_ENTROPY = {
    "xyz": "none",
    "xz": "general",
    "z": "closed-form-z",
    "theta": "closed-form-theta",
    "x": "general",
}
GAMMA = 0.0
MAX_ABS_GAMMA = 2.0

# Stationary and Fokker-Planck analysis
MULTIPLICATIVE_DOMAIN = (1e-3, 100.0)
MULTIPLICATIVE_DP_LIMIT = 2.0 / math.sqrt(math.pi)
FPE_CELLS = 400
FPE_DT = 1e-3
FPE_T_END = 1.0
FPE_SNAPSHOTS = 5
FPE_BUMP_WIDTH = 0.05
BOUNDARY_EXTRAPOLATION_DECADE = 10.0
STATIONARY_POINTS = 1001

# Histogram analysis
HIST_BIN_WIDTH = 1e-2
HIST_EXCLUDE_FRACTION = 0.02
HIST_MIN_EXPECTED = 5.0
HIST_THIN = 100
CHI2_ALPHA = 0.01
KS_ALPHA = 0.01

# Output
CSV_SCHEMA_VERSION = "1"
CSV_FLOAT_FORMAT = "%.17g"

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3
