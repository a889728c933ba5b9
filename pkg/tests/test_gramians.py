import numpy as np
import pytest

from pricing.monte_carlo import SimulationGrid, relevance_estimates
from system.gramians import (
    GramianPair,
    compute_gramians,
    gramian_P,
    gramian_P_vectorized,
    gramian_Q,
    gramian_Q_vectorized,
    gramian_spectra,
    load_gramian,
    lyapunov_adjoint_apply,
    lyapunov_apply,
    lyapunov_matrix,
    lyapunov_ode_integral,
    lyapunov_ode_oracle,
    save_gramian,
    save_spectra_csv,
)
from system.signature_sde import assemble_system
from utils.errors import GramianInconsistencyError


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@pytest.fixture
def time_only_system():
    """d=1, m=1: x = (1, t), no noise."""
    return assemble_system(1, 1, np.zeros((0, 0)))


def test_lyapunov_of_zero(small_system):
    n = small_system.n
    assert not np.any(lyapunov_apply(small_system, np.zeros((n, n))))
    assert not np.any(lyapunov_adjoint_apply(small_system, np.zeros((n, n))))


def test_lyapunov_time_only(time_only_system):
    out = lyapunov_apply(time_only_system, np.diag([1.0, 0.0]))
    assert np.array_equal(out, np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_lyapunov_matches_kronecker_form(small_system, rng):
    n = small_system.n
    Z = rng.normal(size=(n, n))
    kmat = lyapunov_matrix(small_system)
    expected = (kmat @ Z.ravel(order="F")).reshape((n, n), order="F")
    assert np.allclose(lyapunov_apply(small_system, Z), expected, rtol=0, atol=1e-12)
    expected_adj = (kmat.T @ Z.ravel(order="F")).reshape((n, n), order="F")
    assert np.allclose(lyapunov_adjoint_apply(small_system, Z), expected_adj, rtol=0, atol=1e-12)


def test_adjoint_pairing(small_system, rng):
    n = small_system.n
    Y, Z = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    lhs = np.sum(lyapunov_apply(small_system, Y) * Z)
    rhs = np.sum(Y * lyapunov_adjoint_apply(small_system, Z))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_threads_do_not_change_operator(rng):
    system = assemble_system(3, 2, np.array([[1.0, 0.3], [0.3, 2.0]]))
    Z = rng.normal(size=(system.n, system.n))
    assert np.allclose(lyapunov_apply(system, Z, threads=1), lyapunov_apply(system, Z, threads=2), rtol=0, atol=1e-13)


def test_gramian_P_time_only(time_only_system):
    T = 2.0
    P = gramian_P(time_only_system, T)
    assert np.allclose(P, [[T, T**2 / 2], [T**2 / 2, T**3 / 3]], rtol=1e-15, atol=0)


def test_gramian_Q_time_only():
    system = assemble_system(1, 1, np.zeros((0, 0)), L=np.array([[0.0, 1.0]]))
    T = 2.0
    assert np.allclose(gramian_Q(system, T), [[T**3 / 3, T**2 / 2], [T**2 / 2, T]], rtol=1e-15, atol=0)


def test_gramian_Q_needs_output():
    system = assemble_system(2, 1, np.array([[1.0]]), L=np.zeros((1, 3)))
    with pytest.raises(ValueError):
        gramian_Q(system, 1.0)


def test_short_horizon_limit(small_system):
    T = 1e-7
    z = small_system.z
    assert np.allclose(gramian_P(small_system, T) / T, np.outer(z, z), rtol=0, atol=1e-6)


def test_series_matches_ode_oracle(small_system):
    z = small_system.z
    L = small_system.L
    P = gramian_P(small_system, 1.0)
    Q = gramian_Q(small_system, 1.0)
    assert _rel(P, lyapunov_ode_integral(small_system, np.outer(z, z), 1.0)) < 1e-8
    assert _rel(Q, lyapunov_ode_integral(small_system, L.T @ L, 1.0, adjoint=True)) < 1e-8


def test_flow_oracle_at_zero_and_short_time(small_system):
    z = small_system.z
    M = np.outer(z, z)
    assert np.array_equal(lyapunov_ode_oracle(small_system, M, 0.0), M)
    h = 1e-4
    flow = lyapunov_ode_oracle(small_system, M, h)
    assert np.allclose(flow, M + h * lyapunov_apply(small_system, M), rtol=0, atol=1e-7)


def test_series_matches_vectorized(small_system):
    P = gramian_P(small_system, 1.0)
    Q = gramian_Q(small_system, 1.0)
    assert np.allclose(P, gramian_P_vectorized(small_system, 1.0), rtol=0, atol=1e-12 * np.max(np.abs(P)))
    assert np.allclose(Q, gramian_Q_vectorized(small_system, 1.0), rtol=0, atol=1e-12 * np.max(np.abs(Q)))


def test_extra_series_terms_change_nothing(small_system):
    m = small_system.m
    assert np.array_equal(gramian_P(small_system, 1.0, terms=2 * m + 4), gramian_P(small_system, 1.0))
    assert np.array_equal(gramian_Q(small_system, 1.0, terms=2 * m + 4), gramian_Q(small_system, 1.0))


def test_gramians_symmetric_psd(small_system):
    pair = compute_gramians(small_system, 1.0)
    assert np.array_equal(pair.P, pair.P.T)
    assert np.array_equal(pair.Q, pair.Q.T)
    assert np.linalg.eigvalsh(pair.P)[0] > -1e-10 * np.max(np.abs(pair.P))
    assert np.linalg.eigvalsh(pair.Q)[0] > -1e-10 * np.max(np.abs(pair.Q))


def test_gramian_pair_validation():
    with pytest.raises(GramianInconsistencyError):
        GramianPair(np.diag([1.0, -1.0]), np.eye(2), 1.0)
    with pytest.raises(GramianInconsistencyError):
        GramianPair(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(2), 1.0)


def test_spectra_sorted_and_reconstruct(small_system):
    pair = compute_gramians(small_system, 1.0)
    spectra = gramian_spectra(pair)
    assert np.all(np.diff(spectra.lam) <= 0) and np.all(np.diff(spectra.mu) <= 0)
    assert spectra.lam.sum() == pytest.approx(np.trace(pair.P), rel=1e-12)
    rebuilt = spectra.p_vectors @ np.diag(spectra.lam) @ spectra.p_vectors.T
    assert np.allclose(rebuilt, pair.P, rtol=0, atol=1e-12 * np.max(np.abs(pair.P)))

    diag = gramian_spectra(GramianPair(np.diag([3.0, 1.0, 2.0]), np.eye(3), 1.0))
    assert np.array_equal(diag.lam, [3.0, 2.0, 1.0])


def test_eigenvalues_are_expected_relevance(small_system):
    pair = compute_gramians(small_system, 1.0)
    spectra = gramian_spectra(pair)
    grid = SimulationGrid(1.0, 400, 4000, seed=5)
    means, stderrs = relevance_estimates(small_system, spectra.p_vectors[:, :2], grid)
    for k in range(2):
        assert abs(means[k] - spectra.lam[k]) < 3 * stderrs[k] + 0.01 * spectra.lam[k]


def test_gramian_file_round_trip(small_system, tmp_path):
    P = gramian_P(small_system, 1.0)
    path = tmp_path / "gramian_P.bin"
    save_gramian(path, P, 1.0)
    assert path.stat().st_size == 16 + 8 * small_system.n**2
    loaded, horizon = load_gramian(path)
    assert np.array_equal(loaded, P) and horizon == 1.0

    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(GramianInconsistencyError):
        load_gramian(path)


def test_spectra_csv(small_system, tmp_path):
    spectra = gramian_spectra(compute_gramians(small_system, 1.0))
    save_spectra_csv(tmp_path / "spectra.csv", spectra)
    lines = (tmp_path / "spectra.csv").read_text().splitlines()
    assert lines[0] == "k,lambda,mu"
    assert len(lines) == small_system.n + 1
    k, lam, mu = lines[1].split(",")
    assert k == "1" and float(lam) == spectra.lam[0] and float(mu) == spectra.mu[0]
