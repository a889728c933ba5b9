import numpy as np
import pytest
from scipy import linalg

from algebra.words import word_to_index
from pricing.monte_carlo import (
    SimulationGrid,
    brownian_increments,
    l2_error_curve,
    l2_output_error,
    simulate_linear_sde,
)
from system.balancing import ReducedSystem, balance, reduce, transform_system
from system.gramians import compute_gramians
from system.signature_sde import NoiseCovariance
from utils.errors import NonFiniteStateError


def test_grid_validation_and_maturity_steps():
    with pytest.raises(ValueError):
        SimulationGrid(0.0, 10, 10)
    with pytest.raises(ValueError):
        SimulationGrid(1.0, 0, 10)
    assert SimulationGrid.for_maturity(1.0 / 12.0, 100, 0).n_steps == 21
    assert SimulationGrid.for_maturity(1e-4, 100, 0).n_steps == 1
    grid = SimulationGrid(2.0, 8, 1)
    assert grid.step == 0.25 and grid.times[-1] == 2.0


def test_antithetic_pairs(small_system):
    grid = SimulationGrid(1.0, 5, 4, seed=9, antithetic=True)
    dB = brownian_increments(grid, small_system.K, 0, 4)
    assert np.array_equal(dB[1], -dB[0]) and np.array_equal(dB[3], -dB[2])
    assert not np.array_equal(dB[2], dB[0])


def test_increment_covariance():
    K = NoiseCovariance.from_correlation(np.array([[1.0, -0.9], [-0.9, 1.0]]))
    grid = SimulationGrid(1.0, 4, 20000, seed=3)
    dB = brownian_increments(grid, K, 0, grid.n_paths).reshape(-1, 2)
    assert np.allclose(np.cov(dB.T), K.K * grid.step, atol=0.01 * grid.step)


def test_time_coordinates_are_deterministic(small_system):
    order = small_system.order
    grid = SimulationGrid(1.0, 32, 5, seed=1)
    states = simulate_linear_sde(small_system, grid, return_states=True).states
    assert np.all(states[:, :, 0] == 1.0)
    assert np.allclose(states[:, :, word_to_index((1,), order)], grid.times, rtol=0, atol=1e-14)


def test_noise_free_system_converges_to_matrix_exponential(small_system):
    n = small_system.n
    A = small_system.A.toarray()
    zeros = tuple(np.zeros((n, n)) for _ in range(2))
    system = ReducedSystem(d=2, m=2, A=A, N=zeros, K=small_system.K, z=small_system.z, L=small_system.L)
    exact = float(small_system.L[0] @ linalg.expm(A) @ small_system.z)

    def error(M: int) -> float:
        y = simulate_linear_sde(system, SimulationGrid(1.0, M, 2)).terminal
        return float(np.max(np.abs(y - exact)))

    assert error(1000) < error(100) < 1.0
    assert error(1000) < 1e-2 * max(1.0, abs(exact))


def test_shared_noise_reproduces_seeded_draws(small_system):
    grid = SimulationGrid(1.0, 16, 10, seed=4)
    dB = brownian_increments(grid, small_system.K, 0, 10)
    a = simulate_linear_sde(small_system, grid)
    b = simulate_linear_sde(small_system, grid, shared_noise=dB)
    assert np.array_equal(a.outputs, b.outputs)
    with pytest.raises(ValueError):
        simulate_linear_sde(small_system, grid, shared_noise=dB[:5])


def test_threads_and_chunks_do_not_change_paths(small_system):
    grid = SimulationGrid(1.0, 16, 23, seed=4)
    a = simulate_linear_sde(small_system, grid, threads=1)
    b = simulate_linear_sde(small_system, grid, threads=3, chunk=5)
    assert np.array_equal(a.outputs, b.outputs)
    assert a.outputs.shape == (23, 17, 1) and a.terminal.shape == (23,)


def test_non_finite_state_reports_path():
    system = ReducedSystem(
        d=1,
        m=1,
        A=np.array([[1e308]]),
        N=(np.zeros((1, 1)),),
        K=NoiseCovariance(np.zeros((0, 0))),
        z=np.array([10.0]),
        L=np.array([[1.0]]),
    )
    with pytest.raises(NonFiniteStateError) as info:
        simulate_linear_sde(system, SimulationGrid(1.0, 4, 3))
    assert info.value.path_index == 0


def test_similarity_transform_has_no_output_error(small_system, rng):
    T = np.eye(small_system.n) + 0.1 * rng.normal(size=(small_system.n, small_system.n))
    res = l2_output_error(small_system, transform_system(small_system, T), SimulationGrid(1.0, 64, 200, seed=2))
    assert res.relative < 1e-10


def test_full_rank_reduction_has_no_output_error(small_system):
    pair = compute_gramians(small_system, 1.0)
    bal = balance(pair.P, pair.Q)
    res = l2_output_error(small_system, reduce(small_system, bal, bal.r), SimulationGrid(1.0, 512, 1000, seed=6))
    assert res.relative < 1e-6
    assert res.profile.shape == (513,)


def test_error_curve_shrinks(small_system):
    pair = compute_gramians(small_system, 1.0)
    bal = balance(pair.P, pair.Q)
    reduced = [reduce(small_system, bal, k) for k in range(1, bal.r + 1)]
    curve = l2_error_curve(small_system, reduced, SimulationGrid(1.0, 128, 2000, seed=7), threads=2, chunk=500)
    assert len(curve) == bal.r
    assert curve[-1].error < 1e-6 * curve[0].error + 1e-12
    assert all(res.error <= curve[0].error + 2 * (res.stderr + curve[0].stderr) for res in curve)
    assert all(res.relative_stderr >= 0 for res in curve)


@pytest.mark.slow
def test_error_curve_is_nonincreasing_within_noise(small_system):
    pair = compute_gramians(small_system, 1.0)
    bal = balance(pair.P, pair.Q)
    reduced = [reduce(small_system, bal, k) for k in range(1, bal.r + 1)]
    curve = l2_error_curve(small_system, reduced, SimulationGrid(1.0, 256, 10000, seed=8), threads=4)
    for a, b in zip(curve, curve[1:]):
        assert b.error <= a.error + 2 * (a.stderr + b.stderr)


def test_error_curve_requires_shared_noise(small_system):
    other = ReducedSystem(
        d=2, m=2, A=np.zeros((1, 1)), N=(np.zeros((1, 1)),) * 2,
        K=NoiseCovariance(np.array([[2.0]])), z=np.ones(1), L=np.ones((1, 1)),
    )
    with pytest.raises(ValueError):
        l2_error_curve(small_system, [other], SimulationGrid(1.0, 4, 4))
