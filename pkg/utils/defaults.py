# utils/defaults.py

# Two-factor Bergomi parameters (flat forward variance)
BERGOMI_OMEGA = 3.0
BERGOMI_K1 = 2.63
BERGOMI_K2 = 0.42
BERGOMI_THETA1 = 0.69
BERGOMI_RHO12 = 0.7
BERGOMI_RHO_S1 = -0.9
BERGOMI_RHO_S2 = -0.9
BERGOMI_S0 = 1.0
BERGOMI_XI0 = 0.04

# Rough Bergomi parameters
ROUGH_H = 0.3
ROUGH_ETA = 2.3
ROUGH_RHO = -0.9
ROUGH_S0 = 1.0
ROUGH_XI0 = 0.04

# Signature truncation per model: driver (t, Z, W1, W2) and (t, Z, W)
BERGOMI_SIGNATURE = (4, 5)
ROUGH_SIGNATURE = (3, 7)

# Exact-covariance fBm simulation is O(M^3) in the number of grid steps
ROUGH_MAX_STEPS = 2048

# Numerical tolerances
PSD_TOL = 1e-12
RANK_TOL = 1e-12
BIORTH_TOL = 1e-8
SYMMETRY_TOL = 1e-12
EIG_CLIP_REL = 1e-10
ODE_TOL = 1e-10
IV_LOWER = 1e-6
IV_UPPER = 5.0
IV_PRICE_TOL = 1e-12

# Fitting
TRAIN_FRACTION = 0.8
RIDGE_SCALE = 1e-8  # lambda = RIDGE_SCALE * mean(target^2)
RIDGE_SWEEP = tuple(10.0 ** k for k in range(-10, -1))
FIT_PATHS = 2000
FIT_CHUNK = 16

# Monte Carlo
STEPS_PER_YEAR = 256
SMILE_PATHS = 100_000
L2_PATHS = 10_000
PATH_CHUNK = 2048
MATURITIES = (1.0 / 12.0, 0.5, 1.0)
STRIKE_COUNT = 21

# Reduction sweeps
BERGOMI_DIMS = tuple(range(1, 41))
ROUGH_DIMS = tuple(range(1, 71))

# Reference values to compare a run against
REFERENCE_TARGETS = {
    "bergomi": {
        "state_dimension": 1365,
        "sigma_crossing_index": 28,
        "sigma_crossing_level": 1e-8,
        "iv_rel_error_dim_11": 1e-4,
        "iv_rel_error_dim_5": 1e-2,
        "exact_dim": 27,
    },
    "rough_bergomi": {
        "state_dimension": 3280,
        "sigma_crossing_index": 56,
        "sigma_crossing_level": 1e-8,
        "iv_rel_error_dim_15": 1e-3,
        "l2_rel_error_above_dim_10": 1e-2,
        "exact_dim": 55,
    },
}

# Pipeline
FIT_HORIZON = 1.0
FIT_STEPS = 64
GRAMIAN_HORIZON = 1.0
BERGOMI_PRICE_DIMS = (5, 11, 27)
ROUGH_PRICE_DIMS = (15, 55)
DEFAULT_SEED = 2024
DEFAULT_OUT = "runs/default"
