# models/bergomi.py
"""
Two-factor Bergomi model with a flat initial forward variance curve xi0:

    dS_t = sqrt(v_t) S_t dZ_t,
    v_t  = xi0 * exp(alpha X_t - 1/2 alpha^2 Var X_t),
    X_t  = w1 Y1_t + w2 Y2_t,   dY_i = -k_i Y_i dt + dW^i,   w1 = theta1, w2 = 1 - theta1,
    alpha = omega / sqrt(sum_ij w_i w_j rho_ij).

The OU factors are advanced exactly, so E[v_t] = xi0 at every grid time.
"""
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.gaussian import check_correlation, covariance_factor
from models.path_batch import PathBatch
from utils import defaults
from utils.logger import get_logger
from utils.parallel import map_path_chunks
from utils.rng import path_normals

logger = get_logger(__name__)


class BergomiConfig(BaseModel):
    """Two-factor Bergomi parameters; defaults are the reference parameter set."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    omega: float = Field(defaults.BERGOMI_OMEGA, ge=0)
    k1: float = Field(defaults.BERGOMI_K1, gt=0)
    k2: float = Field(defaults.BERGOMI_K2, gt=0)
    theta1: float = Field(defaults.BERGOMI_THETA1, ge=0, le=1)
    rho12: float = Field(defaults.BERGOMI_RHO12, ge=-1, le=1)
    rho_s1: float = Field(defaults.BERGOMI_RHO_S1, ge=-1, le=1)
    rho_s2: float = Field(defaults.BERGOMI_RHO_S2, ge=-1, le=1)
    s0: float = Field(defaults.BERGOMI_S0, gt=0)
    xi0: float = Field(defaults.BERGOMI_XI0, gt=0)

    @model_validator(mode="after")
    def correlation_is_psd(self):
        check_correlation(self.correlation_matrix(), "correlation of (Z, W1, W2)")
        return self

    def correlation_matrix(self) -> np.ndarray:
        """3x3 correlation of (Z, W1, W2)."""
        return np.array([
            [1.0, self.rho_s1, self.rho_s2],
            [self.rho_s1, 1.0, self.rho12],
            [self.rho_s2, self.rho12, 1.0],
        ])

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.theta1, 1.0 - self.theta1])

    @property
    def rates(self) -> np.ndarray:
        return np.array([self.k1, self.k2])

    @property
    def alpha(self) -> float:
        w = self.weights
        rho = self.correlation_matrix()[1:, 1:]
        return self.omega / np.sqrt(w @ rho @ w)

    def factor_variance(self, t: np.ndarray) -> np.ndarray:
        """Var X_t = sum_ij w_i w_j rho_ij (1 - exp(-(k_i + k_j) t)) / (k_i + k_j)."""
        t = np.asarray(t, dtype=float)
        w, k = self.weights, self.rates
        rho = self.correlation_matrix()[1:, 1:]
        out = np.zeros_like(t)
        for i in range(2):
            for j in range(2):
                ks = k[i] + k[j]
                out = out + w[i] * w[j] * rho[i, j] * -np.expm1(-ks * t) / ks
        return out


def step_covariance(cfg: BergomiConfig, h: float) -> np.ndarray:
    """
    Covariance of (dZ, dW1, dW2, I1, I2) over one step of length h, where
    I_i = int_t^{t+h} exp(-k_i (t + h - s)) dW^i_s is the exact OU innovation.
    """
    C = cfg.correlation_matrix()
    k = cfg.rates
    cov = np.empty((5, 5))
    cov[:3, :3] = C * h
    for i in range(2):
        g = -np.expm1(-k[i] * h) / k[i]
        cov[3 + i, :3] = C[1 + i] * g
        cov[:3, 3 + i] = C[1 + i] * g
        for j in range(2):
            ks = k[i] + k[j]
            cov[3 + i, 3 + j] = C[1 + i, 1 + j] * -np.expm1(-ks * h) / ks
    return cov


def simulate_bergomi(
    cfg: BergomiConfig,
    horizon: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    threads: int = 1,
    chunk: int = defaults.PATH_CHUNK,
) -> PathBatch:
    """
    Simulate Bergomi price paths together with their time-extended driver (t, Z, W1, W2).

    Args:
        cfg (BergomiConfig): Model parameters.
        horizon (float): T > 0.
        n_steps (int): Uniform steps M >= 1.
        n_paths (int): Number of paths.
        seed (int): Global seed; path p draws from the stream keyed by (seed, p).
        threads (int): Worker threads.
        chunk (int): Paths per worker task.

    Returns:
        PathBatch: Prices, variance and drivers on the grid.
    """
    if n_steps < 1 or horizon <= 0 or n_paths < 1:
        raise ValueError(f"Need n_steps >= 1, horizon > 0, n_paths >= 1; got {n_steps}, {horizon}, {n_paths}.")
    h = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    F = covariance_factor(step_covariance(cfg, h), "Bergomi step covariance")
    decay = np.exp(-cfg.rates * h)
    w = cfg.weights
    alpha = cfg.alpha
    compensator = 0.5 * alpha**2 * cfg.factor_variance(times)

    def run(start: int, stop: int):
        incr = path_normals(seed, start, stop, (n_steps, 5)) @ F.T
        B = stop - start
        Y = np.zeros((B, 2))
        v = np.empty((B, n_steps + 1))
        log_s = np.empty((B, n_steps + 1))
        v[:, 0] = cfg.xi0
        log_s[:, 0] = np.log(cfg.s0)
        for j in range(n_steps):
            log_s[:, j + 1] = log_s[:, j] - 0.5 * v[:, j] * h + np.sqrt(v[:, j]) * incr[:, j, 0]
            Y = decay * Y + incr[:, j, 3:]
            v[:, j + 1] = cfg.xi0 * np.exp(alpha * (Y @ w) - compensator[j + 1])
        drivers = np.zeros((B, n_steps + 1, 4))
        drivers[:, :, 0] = times
        drivers[:, 1:, 1:] = np.cumsum(incr[:, :, :3], axis=1)
        return np.exp(log_s), v, drivers

    logger.info(f"Simulating {n_paths} Bergomi paths, {n_steps} steps to T={horizon}")
    parts = map_path_chunks(run, n_paths, chunk, threads, name="BergomiWorker")
    return PathBatch(
        model="bergomi",
        times=times,
        prices=np.concatenate([p[0] for p in parts]),
        variance=np.concatenate([p[1] for p in parts]),
        drivers=np.concatenate([p[2] for p in parts]),
        seed=seed,
    )
