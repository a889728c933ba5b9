import numpy as np
import pytest

from models.rough_bergomi import (
    RoughBergomiConfig,
    joint_factor,
    rl_covariance,
    rl_cross_covariance,
    simulate_rough_bergomi,
)
from pricing.black_scholes import bs_vega, implied_vol, price_european_call
from utils import defaults


def test_reference_parameters():
    cfg = RoughBergomiConfig()
    assert (cfg.hurst, cfg.eta, cfg.rho) == (0.3, 2.3, -0.9)


def test_rl_covariance():
    times = np.linspace(0.0, 1.0, 33)[1:]
    cov = rl_covariance(0.3, times)
    assert np.allclose(np.diag(cov), times**0.6, rtol=1e-14)
    assert np.array_equal(cov, cov.T)
    assert np.linalg.eigvalsh(cov)[0] > -1e-12


def test_standard_brownian_case():
    # H = 1/2 is Brownian motion: Cov = min(s, t)
    times = np.linspace(0.0, 1.0, 9)[1:]
    assert np.allclose(rl_covariance(0.5, times), np.minimum.outer(times, times), rtol=1e-12)


def test_cross_covariance_sums_to_total():
    H = 0.3
    times = np.linspace(0.0, 2.0, 17)[1:]
    cross = rl_cross_covariance(H, times)
    assert np.allclose(cross.sum(axis=1), np.sqrt(2 * H) / (H + 0.5) * times ** (H + 0.5), rtol=1e-12)
    assert not np.any(np.triu(cross, k=1))


def test_joint_factor_is_cached():
    assert joint_factor(0.3, 1.0, 16) is joint_factor(0.3, 1.0, 16)
    F = joint_factor(0.3, 1.0, 16)
    assert F.shape == (32, 32)


def test_too_many_steps():
    with pytest.raises(ValueError):
        simulate_rough_bergomi(RoughBergomiConfig(), 1.0, defaults.ROUGH_MAX_STEPS + 1, 1, seed=0)


def test_batch_layout_and_reproducibility():
    a = simulate_rough_bergomi(RoughBergomiConfig(), 1.0, 16, 12, seed=4, threads=1, chunk=12)
    b = simulate_rough_bergomi(RoughBergomiConfig(), 1.0, 16, 12, seed=4, threads=3, chunk=5)
    assert a.drivers.shape == (12, 17, 3)
    assert np.array_equal(a.prices, b.prices) and np.array_equal(a.drivers, b.drivers)
    assert np.all(a.prices[:, 0] == 1.0)


def test_volterra_variance():
    cfg = RoughBergomiConfig()
    n_steps = 16
    batch = simulate_rough_bergomi(cfg, 1.0, n_steps, 20000, seed=21, threads=2)
    t = batch.times[-1]
    log_v = np.log(batch.variance[:, -1] / cfg.xi0) + 0.5 * cfg.eta**2 * t ** (2 * cfg.hurst)
    sample_var = log_v.var(ddof=1)
    expected = cfg.eta**2 * t ** (2 * cfg.hurst)
    assert abs(sample_var - expected) < 3 * expected * np.sqrt(2.0 / (log_v.size - 1))


def test_driver_correlation():
    cfg = RoughBergomiConfig()
    batch = simulate_rough_bergomi(cfg, 1.0, 8, 20000, seed=22, threads=2)
    z, w = batch.drivers[:, -1, 1], batch.drivers[:, -1, 2]
    corr = np.corrcoef(z, w)[0, 1]
    assert abs(corr - cfg.rho) < 3 * (1 - cfg.rho**2) / np.sqrt(z.size)
    assert abs(w.var(ddof=1) - 1.0) < 3 * np.sqrt(2.0 / (w.size - 1))


def test_zero_vol_of_vol_is_black_scholes():
    cfg = RoughBergomiConfig(eta=0.0)
    batch = simulate_rough_bergomi(cfg, 1.0, 8, 20000, seed=23, threads=2)
    assert np.allclose(batch.variance, cfg.xi0)
    prices, stderrs = price_european_call(batch.prices[:, -1], np.array([1.0]))
    iv = implied_vol(float(prices[0]), 1.0, 1.0, 1.0)
    assert abs(iv - 0.2) < 3 * stderrs[0] / bs_vega(1.0, 1.0, 1.0, iv)


def test_price_is_martingale():
    batch = simulate_rough_bergomi(RoughBergomiConfig(), 1.0, 32, 20000, seed=24, threads=2)
    terminal = batch.prices[:, -1]
    assert abs(terminal.mean() - 1.0) < 3 * terminal.std(ddof=1) / np.sqrt(terminal.size)
