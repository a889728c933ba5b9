# models/rough_bergomi.py
"""
Rough Bergomi model:

    dS_t = sqrt(v_t) S_t dZ_t,   v_t = xi0 * exp(eta W^H_t - 1/2 eta^2 t^{2H}),
    W^H_t = sqrt(2H) int_0^t (t - s)^{H - 1/2} dW_s,   Z = rho W + sqrt(1 - rho^2) W_perp.

(W^H at the grid nodes, W increments) is jointly Gaussian; it is drawn through a
factor of its exact 2M x 2M covariance, which is O(M^3) to set up and reused for
every path.
"""
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import hyp2f1

from models.gaussian import covariance_factor
from models.path_batch import PathBatch
from utils import defaults
from utils.logger import get_logger
from utils.parallel import map_path_chunks
from utils.rng import path_normals

logger = get_logger(__name__)


class RoughBergomiConfig(BaseModel):
    """Rough Bergomi parameters; defaults are the reference parameter set."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    hurst: float = Field(defaults.ROUGH_H, gt=0, lt=1)
    eta: float = Field(defaults.ROUGH_ETA, ge=0)
    rho: float = Field(defaults.ROUGH_RHO, ge=-1, le=1)
    s0: float = Field(defaults.ROUGH_S0, gt=0)
    xi0: float = Field(defaults.ROUGH_XI0, gt=0)


def rl_covariance(hurst: float, times: np.ndarray) -> np.ndarray:
    """
    Covariance of the Riemann-Liouville fBm at the given positive times.

    For s < t: 2H/(H + 1/2) s^{H+1/2} t^{H-1/2} 2F1(1/2 - H, 1; 3/2 + H; s/t); Var W^H_t = t^{2H}.
    """
    H = hurst
    t = np.asarray(times, dtype=float)
    hi = np.maximum.outer(t, t)
    lo = np.minimum.outer(t, t)
    cov = (2 * H / (H + 0.5)) * lo ** (H + 0.5) * hi ** (H - 0.5) * hyp2f1(0.5 - H, 1.0, 1.5 + H, lo / hi)
    np.fill_diagonal(cov, t ** (2 * H))
    return cov


def rl_cross_covariance(hurst: float, times: np.ndarray) -> np.ndarray:
    """
    Cov(W^H_{t_i}, W_{t_k} - W_{t_{k-1}}) on the grid 0 = t_0 < t_1 < ... (times are t_1..t_M).

    Equals sqrt(2H)/(H + 1/2) ((t_i - t_{k-1})^{H+1/2} - (t_i - min(t_k, t_i))^{H+1/2}) for k <= i, else 0.
    """
    H = hurst
    t = np.asarray(times, dtype=float)
    left = np.concatenate([[0.0], t[:-1]])
    ti = t[:, None]
    upper = np.minimum(t[None, :], ti)
    a = np.clip(ti - left[None, :], 0.0, None)
    b = np.clip(ti - upper, 0.0, None)
    cross = np.sqrt(2 * H) / (H + 0.5) * (a ** (H + 0.5) - b ** (H + 0.5))
    return np.where(left[None, :] < ti, cross, 0.0)


@lru_cache(maxsize=8)
def joint_factor(hurst: float, horizon: float, n_steps: int) -> np.ndarray:
    """Factor of the covariance of (W^H_{t_1..t_M}, dW_1..dW_M) on the uniform grid."""
    times = np.linspace(0.0, horizon, n_steps + 1)[1:]
    h = horizon / n_steps
    cross = rl_cross_covariance(hurst, times)
    cov = np.block([
        [rl_covariance(hurst, times), cross],
        [cross.T, h * np.eye(n_steps)],
    ])
    F = covariance_factor(cov, f"rough Bergomi covariance (H={hurst}, M={n_steps})")
    F.setflags(write=False)
    return F


def simulate_rough_bergomi(
    cfg: RoughBergomiConfig,
    horizon: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    threads: int = 1,
    chunk: int = defaults.PATH_CHUNK,
) -> PathBatch:
    """
    Simulate rough Bergomi price paths with their time-extended driver (t, Z, W).

    :param cfg: Model parameters.
    :param horizon: T > 0.
    :param n_steps: Uniform steps, at most ROUGH_MAX_STEPS.
    :param n_paths: Number of paths.
    :param seed: Global seed; path p draws from the stream keyed by (seed, p).
    :param threads: Worker threads.
    :param chunk: Paths per worker task.
    """
    if n_steps < 1 or horizon <= 0 or n_paths < 1:
        raise ValueError(f"Need n_steps >= 1, horizon > 0, n_paths >= 1; got {n_steps}, {horizon}, {n_paths}.")
    if n_steps > defaults.ROUGH_MAX_STEPS:
        raise ValueError(f"Exact-covariance simulation supports at most {defaults.ROUGH_MAX_STEPS} steps, got {n_steps}.")
    h = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    F = joint_factor(cfg.hurst, float(horizon), n_steps)
    compensator = 0.5 * cfg.eta**2 * times[1:] ** (2 * cfg.hurst)
    rho_perp = np.sqrt(1.0 - cfg.rho**2)
    M = n_steps

    def run(start: int, stop: int):
        normals = path_normals(seed, start, stop, (3 * M,))
        joint = normals[:, : 2 * M] @ F.T
        W_hat, dW = joint[:, :M], joint[:, M:]
        dZ = cfg.rho * dW + rho_perp * np.sqrt(h) * normals[:, 2 * M:]
        B = stop - start
        v = np.empty((B, M + 1))
        v[:, 0] = cfg.xi0
        v[:, 1:] = cfg.xi0 * np.exp(cfg.eta * W_hat - compensator)
        log_s = np.empty((B, M + 1))
        log_s[:, 0] = np.log(cfg.s0)
        log_s[:, 1:] = log_s[:, :1] + np.cumsum(-0.5 * v[:, :-1] * h + np.sqrt(v[:, :-1]) * dZ, axis=1)
        drivers = np.zeros((B, M + 1, 3))
        drivers[:, :, 0] = times
        drivers[:, 1:, 1] = np.cumsum(dZ, axis=1)
        drivers[:, 1:, 2] = np.cumsum(dW, axis=1)
        return np.exp(log_s), v, drivers

    logger.info(f"Simulating {n_paths} rough Bergomi paths (H={cfg.hurst}), {n_steps} steps to T={horizon}")
    parts = map_path_chunks(run, n_paths, chunk, threads, name="RoughBergomiWorker")
    return PathBatch(
        model="rough_bergomi",
        times=times,
        prices=np.concatenate([p[0] for p in parts]),
        variance=np.concatenate([p[1] for p in parts]),
        drivers=np.concatenate([p[2] for p in parts]),
        seed=seed,
    )
