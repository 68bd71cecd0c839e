"""
Default settings for the experiment harness

Values here are used whenever an experiment config document leaves a field out.
Edit them to change the defaults for every run.
"""

# Where run artifacts go when neither the config nor --output-dir says otherwise
OUTPUT_DIR = "./results"

# Seeds used when a config has no "seeds" entry
DEFAULT_SEEDS = [0]

# Worker threads for independent (sampler, seed) cells
DEFAULT_THREADS = 4

# Sampler hyperparameters
DEFAULT_BETA = 1.0
PRECOND_ALPHA = 0.99
PRECOND_EPS = 1e-5

# Step multiplier (1+4*sigma)^(1/4) for smoothed samplers
SCALE_LS_STEP = True

# 2D Gaussian: off-diagonal coupling c of [[1+c, -c], [-c, 1+c]], base step from the grid search and its decay grid 0.19 * 0.8^k, k = 0..4
GAUSS2D_ETA = 0.19
GAUSS2D_ETA_GRID = [0.19 * 0.8 ** k for k in range(5)]
GAUSS2D_COUPLING = 0.1
GAUSS2D_ITERATIONS = 200000
GAUSS2D_RECORD_SAMPLES = 600
# pSGLD and LS-pSGLD reuse GAUSS2D_ETA; LS samplers run once unscaled and once with the step multiplier
GAUSS2D_PSGLD_ETA = 0.19

# Long full-gradient runs: independent chains pooled per sampler
STATIONARITY_ETA = 1e-3
STATIONARITY_ITERATIONS = 200000
STATIONARITY_BURN_IN = 10000
STATIONARITY_CHAINS = 200
STATIONARITY_COUPLING = 0.1

# Gaussian mixture
MIXTURE_COMPONENTS = 500
MIXTURE_BATCH_SIZE = 10
MIXTURE_ITERATIONS = [100000, 500000, 1000000]
MIXTURE_ETA = 0.05
MIXTURE_COUPLING = 1.0
MIXTURE_TAIL_SAMPLES = 10000
MH_PROPOSAL_SCALE = 1.0
MH_ITERATIONS = 100000

# LD vs LS-LD mixing comparison
MIXING_ETA = 0.1
MIXING_COUPLING = 1.0
MIXING_SEEDS = list(range(10))
MIXING_CHECKPOINTS = [1000, 2000, 5000, 10000, 20000, 50000, 100000]

# Bayesian logistic regression
BLR_BATCH_SIZE = 5
BLR_BURN_IN = 1000
BLR_ITERATIONS = 5000
BLR_EVAL_EVERY = 100
BLR_SGLD_ETA = 0.001
BLR_PSGLD_ETA = 0.002
BLR_SIGMA = 1.0
BLR_PRIOR_LAMBDA = 1.0
BLR_PRIOR_THETA = 1e-2
BLR_EPSILON_NORM = 1e-8
A3A_DIMENSION = 122

# Synthetic stand-in when a3a is not available
SYNTHETIC_N = 3000
SYNTHETIC_D = 122

# Variance table
VARIANCE_SIGMAS = [0.0, 0.5, 1.0, 2.0]
VARIANCE_BATCH_SIZES = [10, 15, 50]
VARIANCE_REPEATS = 100
VARIANCE_PATH_LENGTH = 50

# gamma_2 table
GAMMA_SIGMAS = [1.0, 2.0, 3.0, 4.0, 5.0]
GAMMA_DIMS = [1000, 10000, 100000]

# Bound sweep
BOUNDS_SIGMAS = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]

# Wasserstein subsample cap
W2_MAX_POINTS = 2000

# KDE grid resolution
KDE_GRID_POINTS = 100

# Constants fed to the bound sweep when a config leaves them out
BOUNDS_DEFAULTS = {
    'K': 1000,
    'eta': 0.01,
    'beta': 1.0,
    'd': 1000,
    'omega': 1.0,
    'B': 10,
    'lambda_sobolev': 1.0,
    'f0_beta_logLambda': 1.0,
    'b_dissip': 1.0,
    'M': 1.0,
}
