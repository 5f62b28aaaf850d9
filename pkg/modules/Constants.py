import math

TWO_PI_SQ = (2 * math.pi) ** 2

# lattice
SITE_BUDGET = 20_000
ENUMERATION_BUDGET = 5_000_000

# trajectories
ADMISSIBILITY_EXPONENT = 1 / 5
PATH_BUDGET = 2_000_000

# dual operator normalization: lambda = 256 * gamma
LAMBDA_FACTOR = 256
RESONANT_POINT_TOL = 1e-12

# numerical tolerances
DEGENERACY_TOL = 1e-10
SINGULAR_RTOL = 1e-12
BOUNDARY_TOL = 1e-14
FD_STEP = 1e-5
FD_RTOL = 1e-6
RESIDUAL_TOL = 1e-10
RECONCILE_TOL = 1e-9
FIXED_POINT_STEPS = 100
FIXED_POINT_TOL = 1e-14

# output
SIGNIFICANT_DIGITS = 17
FLOAT_FORMAT = f".{SIGNIFICANT_DIGITS}g"

# eigenvector decay law
DECAY_SLACK = 4.0
DECAY_RATE = 7 / 8

# exit statuses that are not tied to an error class
EXIT_OK = 0
EXIT_UNHANDLED = 70
