import numpy as np
import pytest
from pydantic import ValidationError

from models.bergomi import BergomiConfig, simulate_bergomi, step_covariance
from models.path_batch import PathBatch
from pricing.black_scholes import bs_vega, implied_vol, price_european_call
from utils.errors import NonFiniteStateError


def test_reference_parameters():
    cfg = BergomiConfig()
    assert (cfg.omega, cfg.k1, cfg.k2, cfg.theta1) == (3.0, 2.63, 0.42, 0.69)
    assert cfg.correlation_matrix()[1, 2] == 0.7
    assert cfg.alpha == pytest.approx(3.0 / np.sqrt(0.69**2 + 0.31**2 + 2 * 0.7 * 0.69 * 0.31), rel=1e-14)


def test_non_psd_correlation_rejected():
    with pytest.raises(ValidationError):
        BergomiConfig(rho12=-0.9, rho_s1=0.9, rho_s2=0.9)


def test_step_covariance():
    cfg = BergomiConfig()
    h = 0.01
    cov = step_covariance(cfg, h)
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov)[0] > -1e-15
    assert np.allclose(np.diag(cov)[:3], h)
    for i, k in enumerate((cfg.k1, cfg.k2)):
        assert cov[3 + i, 3 + i] == pytest.approx((1 - np.exp(-2 * k * h)) / (2 * k), rel=1e-12)
        assert cov[1 + i, 3 + i] == pytest.approx((1 - np.exp(-k * h)) / k, rel=1e-12)


def test_batch_layout():
    batch = simulate_bergomi(BergomiConfig(), 1.0, 16, 10, seed=1)
    assert batch.prices.shape == (10, 17) and batch.drivers.shape == (10, 17, 4)
    assert np.array_equal(batch.drivers[0, :, 0], batch.times)
    assert np.all(batch.prices[:, 0] == 1.0) and np.all(batch.variance[:, 0] == 0.04)
    assert not np.any(batch.drivers[:, 0, 1:])
    assert batch.brownian_increments.shape == (10, 16, 3)


def test_same_seed_same_paths():
    a = simulate_bergomi(BergomiConfig(), 1.0, 8, 20, seed=42)
    b = simulate_bergomi(BergomiConfig(), 1.0, 8, 20, seed=42)
    assert np.array_equal(a.prices, b.prices) and np.array_equal(a.drivers, b.drivers)
    c = simulate_bergomi(BergomiConfig(), 1.0, 8, 20, seed=43)
    assert not np.array_equal(a.prices, c.prices)


def test_threads_and_chunks_do_not_change_paths():
    a = simulate_bergomi(BergomiConfig(), 1.0, 8, 30, seed=5, threads=1, chunk=30)
    b = simulate_bergomi(BergomiConfig(), 1.0, 8, 30, seed=5, threads=3, chunk=7)
    assert np.array_equal(a.prices, b.prices)
    assert np.array_equal(a.variance, b.variance)


def test_price_is_martingale():
    batch = simulate_bergomi(BergomiConfig(), 1.0, 50, 20000, seed=11, threads=2)
    terminal = batch.prices[:, -1]
    se = terminal.std(ddof=1) / np.sqrt(terminal.size)
    assert abs(terminal.mean() - 1.0) < 3 * se


def test_forward_variance_is_flat():
    cfg = BergomiConfig()
    batch = simulate_bergomi(cfg, 1.0, 20, 20000, seed=12, threads=2)
    for j in (5, 10, 20):
        v = batch.variance[:, j]
        se = v.std(ddof=1) / np.sqrt(v.size)
        assert abs(v.mean() - cfg.xi0) < 4 * se


def test_zero_vol_of_vol_is_black_scholes():
    cfg = BergomiConfig(omega=0.0)
    batch = simulate_bergomi(cfg, 1.0, 4, 20000, seed=13, threads=2)
    assert np.allclose(batch.variance, cfg.xi0)
    prices, stderrs = price_european_call(batch.prices[:, -1], np.array([1.0]))
    iv = implied_vol(float(prices[0]), 1.0, 1.0, 1.0)
    iv_se = stderrs[0] / bs_vega(1.0, 1.0, 1.0, iv)
    assert abs(iv - 0.2) < 3 * iv_se


def test_step_count_does_not_bias_lognormal_price():
    cfg = BergomiConfig(omega=0.0)
    coarse = price_european_call(simulate_bergomi(cfg, 1.0, 8, 20000, seed=14).prices[:, -1], np.array([1.0]))
    fine = price_european_call(simulate_bergomi(cfg, 1.0, 16, 20000, seed=15).prices[:, -1], np.array([1.0]))
    combined = np.hypot(coarse[1][0], fine[1][0])
    assert abs(coarse[0][0] - fine[0][0]) < 3 * combined


def test_path_batch_save_load_subset(tmp_path):
    batch = simulate_bergomi(BergomiConfig(), 0.5, 4, 6, seed=3)
    batch.save(tmp_path / "paths.npz")
    loaded = PathBatch.load(tmp_path / "paths.npz")
    assert loaded.model == "bergomi" and loaded.seed == 3
    assert np.array_equal(loaded.prices, batch.prices) and np.array_equal(loaded.drivers, batch.drivers)
    part = batch.subset(2, 5)
    assert part.n_paths == 3 and part.first_path == 2
    assert np.array_equal(part.prices, batch.prices[2:5])


def test_path_batch_rejects_non_finite_prices():
    times = np.linspace(0.0, 1.0, 3)
    prices = np.ones((2, 3))
    prices[1, 2] = np.nan
    with pytest.raises(NonFiniteStateError) as info:
        PathBatch("bergomi", times, prices, np.ones((2, 3)), np.zeros((2, 3, 4)), seed=0)
    assert info.value.path_index == 1
