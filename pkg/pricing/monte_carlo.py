# pricing/monte_carlo.py
"""
Euler-Maruyama simulation of linear signature systems

    x_{j+1} = x_j + h A x_j + sum_{i>=2} N_i x_j dB^i_j,   dB_j ~ N(0, K h),

for full (sparse) and reduced (dense) systems. Increments are drawn per path
from the stream keyed by (seed, path index), so a full and a reduced system
simulated on the same grid see identical noise.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from system.signature_sde import NoiseCovariance
from utils import defaults
from utils.accumulators import mean_and_stderr
from utils.errors import NonFiniteStateError
from utils.logger import get_logger
from utils.parallel import map_path_chunks
from utils.rng import path_generator

logger = get_logger(__name__)


@dataclass(frozen=True)
class SimulationGrid:
    """
    Uniform time grid and path set.

    Attributes:
        horizon (float): T > 0.
        n_steps (int): M >= 1.
        n_paths (int): Number of paths >= 1.
        seed (int): Global seed.
        antithetic (bool): Pair path 2q+1 with the negated increments of path 2q.
    """
    horizon: float
    n_steps: int
    n_paths: int
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.horizon <= 0 or self.n_steps < 1 or self.n_paths < 1:
            raise ValueError(
                f"Need horizon > 0, n_steps >= 1, n_paths >= 1; got {self.horizon}, {self.n_steps}, {self.n_paths}."
            )

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    @classmethod
    def for_maturity(cls, maturity: float, n_paths: int, seed: int,
                     steps_per_year: int = defaults.STEPS_PER_YEAR, antithetic: bool = False) -> "SimulationGrid":
        return cls(maturity, max(1, int(round(maturity * steps_per_year))), n_paths, seed, antithetic)


def brownian_increments(grid: SimulationGrid, K: NoiseCovariance, start: int, stop: int) -> np.ndarray:
    """
    Correlated increments dB ~ N(0, K h) for paths start..stop-1.

    :return: (stop - start, M, d - 1) array.
    """
    F = K.factor()
    shape = (grid.n_steps, K.dim)
    out = np.empty((stop - start,) + shape)
    for j, p in enumerate(range(start, stop)):
        if grid.antithetic:
            xi = path_generator(grid.seed, p // 2).standard_normal(shape)
            out[j] = -xi if p % 2 else xi
        else:
            out[j] = path_generator(grid.seed, p).standard_normal(shape)
    return out @ F.T * np.sqrt(grid.step)


def _euler(system, grid: SimulationGrid, dB: np.ndarray, observe: Callable[[np.ndarray], np.ndarray],
           first_path: int) -> np.ndarray:
    """Run the scheme on a block of paths and stack observe(x_j) for j = 0..M along axis 1."""
    B = dB.shape[0]
    h = grid.step
    A = system.A
    noise = system.noise_matrices
    X = np.tile(np.asarray(system.z, dtype=float), (B, 1))
    obs = [observe(X)]
    for j in range(grid.n_steps):
        Xt = X.T
        drift = np.asarray(A @ Xt).T
        step = h * drift
        for i, Ni in enumerate(noise):
            step += np.asarray(Ni @ Xt).T * dB[:, j, i][:, None]
        X = X + step
        bad = ~np.all(np.isfinite(X), axis=1)
        if np.any(bad):
            path = first_path + int(np.argmax(bad))
            logger.error(f"Non-finite state on path {path} at step {j + 1}")
            raise NonFiniteStateError(f"Non-finite state on path {path} at step {j + 1}.", path)
        obs.append(observe(X))
    return np.stack(obs, axis=1)


@dataclass(frozen=True)
class SimulationResult:
    """Outputs (B, M+1, p) and, when requested, states (B, M+1, n)."""
    times: np.ndarray
    outputs: np.ndarray
    states: Optional[np.ndarray] = None

    @property
    def terminal(self) -> np.ndarray:
        """First output component at the horizon, one value per path."""
        return self.outputs[:, -1, 0]


def simulate_linear_sde(
    system,
    grid: SimulationGrid,
    shared_noise: Optional[np.ndarray] = None,
    return_states: bool = False,
    threads: int = 1,
    chunk: int = defaults.PATH_CHUNK,
) -> SimulationResult:
    """
    Euler-Maruyama paths of a full or reduced signature system.

    Args:
        system: SignatureSDE or ReducedSystem (A, N, K, z, L).
        grid (SimulationGrid): Time grid, path count and seed.
        shared_noise (np.ndarray): Optional (n_paths, M, d-1) increments used instead of the seeded draws.
        return_states (bool): Also return all states (memory n_paths * (M+1) * n).
        threads (int): Worker threads.
        chunk (int): Paths per worker task.

    Returns:
        SimulationResult: Outputs L x_t on the grid.
    """
    if shared_noise is not None:
        expected = (grid.n_paths, grid.n_steps, system.K.dim)
        if shared_noise.shape != expected:
            raise ValueError(f"shared_noise has shape {shared_noise.shape}, expected {expected}.")
    L = np.asarray(system.L, dtype=float)

    def run(start: int, stop: int):
        dB = shared_noise[start:stop] if shared_noise is not None else brownian_increments(grid, system.K, start, stop)
        if return_states:
            states = _euler(system, grid, dB, lambda X: X.copy(), start)
            return states @ L.T, states
        return _euler(system, grid, dB, lambda X: X @ L.T, start), None

    logger.debug(f"Euler-Maruyama: n={system.n}, {grid.n_paths} paths, {grid.n_steps} steps to T={grid.horizon}")
    parts = map_path_chunks(run, grid.n_paths, chunk, threads, name="EulerWorker")
    outputs = np.concatenate([p[0] for p in parts])
    states = np.concatenate([p[1] for p in parts]) if return_states else None
    return SimulationResult(times=grid.times, outputs=outputs, states=states)


@dataclass(frozen=True)
class L2ErrorResult:
    """
    Attributes:
        error (float): sqrt(E int_0^T |y - y_red|^2 dt).
        stderr (float): Monte Carlo standard error of `error` (delta method).
        relative (float): error / sqrt(E int_0^T |y|^2 dt).
        relative_stderr (float): stderr on the same scale.
        profile (np.ndarray): sqrt(E |y_t - y_red_t|^2) per grid time.
    """
    error: float
    stderr: float
    relative: float
    relative_stderr: float
    profile: np.ndarray


def l2_error_curve(full, reduced_systems, grid: SimulationGrid, threads: int = 1,
                   chunk: int = defaults.PATH_CHUNK) -> list[L2ErrorResult]:
    """
    Shared-noise Monte Carlo estimates of the L^2 output error for several reduced systems.

    The full system is simulated once per path block and compared against every reduced system.

    :param full: Reference system.
    :param reduced_systems: Approximating systems with the same K and output dimension.
    :param grid: Common grid and seed.
    """
    reduced_systems = list(reduced_systems)
    for reduced in reduced_systems:
        if full.K.dim != reduced.K.dim or not np.array_equal(full.K.K, reduced.K.K):
            raise ValueError("Full and reduced systems must share the noise covariance K.")
        if full.p != reduced.p:
            raise ValueError(f"Output dimensions differ: {full.p} vs {reduced.p}.")
    times = grid.times
    L = np.asarray(full.L)

    def run(start: int, stop: int):
        dB = brownian_increments(grid, full.K, start, stop)
        y = _euler(full, grid, dB, lambda X: X @ L.T, start)
        energy = trapezoid(np.sum(y**2, axis=2), times, axis=1)
        per_system = []
        for reduced in reduced_systems:
            L_red = np.asarray(reduced.L)
            y_red = _euler(reduced, grid, dB, lambda X: X @ L_red.T, start)
            sq_err = np.sum((y - y_red) ** 2, axis=2)
            per_system.append((trapezoid(sq_err, times, axis=1), np.sum(sq_err, axis=0)))
        return energy, per_system

    parts = map_path_chunks(run, grid.n_paths, chunk, threads, name="L2Worker")
    energy = np.concatenate([p[0] for p in parts])
    scale = float(np.sqrt(np.mean(energy)))

    results = []
    for k, reduced in enumerate(reduced_systems):
        err = np.concatenate([p[1][k][0] for p in parts])
        profile = np.sqrt(np.sum([p[1][k][1] for p in parts], axis=0) / grid.n_paths)
        mu, se = mean_and_stderr(err)
        error = float(np.sqrt(mu))
        stderr = float(se / (2.0 * error)) if error > 0 else float(np.sqrt(se))
        relative = error / scale if scale > 0 else float("nan")
        relative_stderr = stderr / scale if scale > 0 else float("nan")
        logger.info(f"L2 output error n_red={reduced.n}: {error:.3e} +/- {stderr:.1e} (relative {relative:.3e})")
        results.append(L2ErrorResult(error, stderr, relative, relative_stderr, profile))
    return results


def l2_output_error(full, reduced, grid: SimulationGrid, threads: int = 1,
                    chunk: int = defaults.PATH_CHUNK) -> L2ErrorResult:
    """Shared-noise Monte Carlo estimate of sqrt(E int_0^T |y - y_red|^2 dt) for one reduced system."""
    return l2_error_curve(full, [reduced], grid, threads, chunk)[0]


def relevance_estimates(system, directions: np.ndarray, grid: SimulationGrid, threads: int = 1,
                        chunk: int = defaults.PATH_CHUNK) -> tuple[np.ndarray, np.ndarray]:
    """
    Monte Carlo estimates of E int_0^T <x_u, p_k>^2 du for the columns p_k of `directions`.

    For orthonormal eigenvectors of the Gramian P these estimate its eigenvalues.

    :return: (means, standard errors), one per direction.
    """
    directions = np.asarray(directions, dtype=float)
    times = grid.times

    def run(start: int, stop: int):
        dB = brownian_increments(grid, system.K, start, stop)
        proj = _euler(system, grid, dB, lambda X: X @ directions, start)
        return trapezoid(proj**2, times, axis=1)

    samples = np.concatenate(map_path_chunks(run, grid.n_paths, chunk, threads, name="RelevanceWorker"))
    return mean_and_stderr(samples)
