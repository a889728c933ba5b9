# pricing/black_scholes.py
"""
Zero-rate Black-Scholes pricing, implied volatility and call smiles.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from utils import defaults
from utils.accumulators import mean_and_stderr
from utils.errors import BracketError, ImpliedVolBoundsError
from utils.logger import get_logger

logger = get_logger(__name__)


def bs_call(s0, strike, maturity, sigma):
    """
    Black-Scholes call price with zero rate; sigma = 0 gives the intrinsic value.

    Args:
        s0 (float | np.ndarray): Spot.
        strike (float | np.ndarray): Strike.
        maturity (float | np.ndarray): T > 0.
        sigma (float | np.ndarray): Volatility >= 0.

    Returns:
        float | np.ndarray: Call price.
    """
    s0, strike, maturity, sigma = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (s0, strike, maturity, sigma)))
    total = sigma * np.sqrt(maturity)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(s0 / strike) / total + 0.5 * total
        price = s0 * norm.cdf(d1) - strike * norm.cdf(d1 - total)
    price = np.where(total > 0, price, np.maximum(s0 - strike, 0.0))
    return price[()] if price.ndim == 0 else price


def bs_put(s0, strike, maturity, sigma):
    """Put by parity P = C - S0 + K."""
    return bs_call(s0, strike, maturity, sigma) - np.asarray(s0) + np.asarray(strike)


def bs_vega(s0, strike, maturity, sigma):
    s0, strike, maturity, sigma = (np.asarray(x, dtype=float) for x in (s0, strike, maturity, sigma))
    total = sigma * np.sqrt(maturity)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(s0 / strike) / total + 0.5 * total
        vega = s0 * norm.pdf(d1) * np.sqrt(maturity)
    vega = np.where(total > 0, vega, 0.0)
    return vega[()] if vega.ndim == 0 else vega


def implied_vol(price: float, s0: float, strike: float, maturity: float) -> float:
    """
    Volatility reproducing a call price, by a bracketed root solve on [IV_LOWER, IV_UPPER].

    The out-of-the-money time value is inverted (the put price by parity when K < S0),
    which keeps the target away from cancellation for deep in-the-money calls.

    Where vega is below 1e-12 the price is flat in sigma and brentq returns the
    bracket point it stopped at, so the result can miss the target price by more than
    IV_PRICE_TOL. Such volatilities are returned (the residual is only logged at debug
    level); filter on bs_vega when full precision matters.

    :param price: Call price, strictly between max(S0 - K, 0) and S0.
    :raises ImpliedVolBoundsError: price at or outside the no-arbitrage bounds.
    :raises BracketError: the root is not bracketed by [IV_LOWER, IV_UPPER].
    """
    if maturity <= 0 or s0 <= 0 or strike <= 0:
        raise ValueError(f"Need positive spot, strike and maturity; got {s0}, {strike}, {maturity}.")
    intrinsic = max(s0 - strike, 0.0)
    if not np.isfinite(price) or price <= intrinsic:
        raise ImpliedVolBoundsError(f"Price {price!r} is not above the intrinsic value {intrinsic!r}.", "lower", intrinsic)
    if price >= s0:
        raise ImpliedVolBoundsError(f"Price {price!r} is not below the spot {s0!r}.", "upper", s0)

    if strike >= s0:
        target = price

        def f(sigma):
            return bs_call(s0, strike, maturity, sigma) - target
    else:
        target = price - intrinsic  # put price by parity

        def f(sigma):
            return bs_put(s0, strike, maturity, sigma) - target

    lo, hi = defaults.IV_LOWER, defaults.IV_UPPER
    f_lo, f_hi = f(lo), f(hi)
    if f_lo > 0 or f_hi < 0:
        raise BracketError(
            f"Implied vol not bracketed on [{lo}, {hi}] for price {price!r}, K={strike}, T={maturity}: "
            f"f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}."
        )
    if f_lo == 0:
        return lo
    sigma, info = brentq(f, lo, hi, xtol=1e-15, maxiter=200, full_output=True)
    if not info.converged:
        raise BracketError(f"Implied vol solve did not converge: {info.flag}.")
    if abs(f(sigma)) > defaults.IV_PRICE_TOL and bs_vega(s0, strike, maturity, sigma) < 1e-12:
        logger.debug(f"Flat vega at sigma={sigma:.6f}, K={strike}, T={maturity}; price residual {f(sigma):.3e}")
    return float(sigma)


def strike_grid(maturity: float, count: int = defaults.STRIKE_COUNT) -> np.ndarray:
    """Strikes K_j = (0.8 + 0.02 j)^sqrt(T), j = 0..count-1."""
    if maturity <= 0:
        raise ValueError(f"Maturity must be positive, got {maturity}.")
    return (0.8 + 0.02 * np.arange(count)) ** np.sqrt(maturity)


def price_european_call(terminal: np.ndarray, strikes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Monte Carlo call prices E[max(S_T - K, 0)] with standard errors.

    :param terminal: (n_paths,) samples of S_T (may be nonpositive for a signature model).
    :param strikes: Strikes.
    :return: (prices, standard errors) per strike.
    """
    terminal = np.asarray(terminal, dtype=float)
    if not np.all(np.isfinite(terminal)):
        raise ValueError("Terminal samples must be finite.")
    payoff = np.maximum(terminal[:, None] - np.asarray(strikes, dtype=float)[None, :], 0.0)
    return mean_and_stderr(payoff, axis=0)


@dataclass(frozen=True)
class IVSmile:
    """
    Call prices and implied volatilities across strikes at one maturity.

    Attributes:
        maturity (float): T.
        strikes (np.ndarray): Strictly increasing strikes.
        prices (np.ndarray): Monte Carlo call prices.
        stderrs (np.ndarray): Price standard errors.
        ivs (np.ndarray): Implied vols, NaN where inversion failed.
        iv_stderrs (np.ndarray): stderr / vega at the implied vol.
        failures (int): Strikes where inversion failed.
    """
    maturity: float
    strikes: np.ndarray
    prices: np.ndarray
    stderrs: np.ndarray
    ivs: np.ndarray
    iv_stderrs: np.ndarray
    failures: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.strikes) <= 0):
            raise ValueError("Strikes must be strictly increasing.")

    def arbitrage_violations(self, s0: float = 1.0) -> int:
        """Strikes where prices break monotonicity or the intrinsic bound beyond 3 standard errors."""
        tol = 3.0 * self.stderrs
        below = self.prices < np.maximum(s0 - self.strikes, 0.0) - tol
        rising = np.concatenate([[False], np.diff(self.prices) > tol[1:] + tol[:-1]])
        return int(np.sum(below | rising))

    def rows(self):
        for k, p, se, iv, ivse in zip(self.strikes, self.prices, self.stderrs, self.ivs, self.iv_stderrs):
            yield self.maturity, k, p, se, iv, ivse


def build_smile(terminal: np.ndarray, maturity: float, s0: float = 1.0, strikes=None) -> IVSmile:
    """Price the strike grid from terminal samples and invert every price."""
    strikes = strike_grid(maturity) if strikes is None else np.asarray(strikes, dtype=float)
    prices, stderrs = price_european_call(terminal, strikes)
    ivs = np.full(strikes.shape, np.nan)
    iv_stderrs = np.full(strikes.shape, np.nan)
    failures = 0
    for j, (k, p) in enumerate(zip(strikes, prices)):
        try:
            ivs[j] = implied_vol(float(p), s0, float(k), maturity)
        except (ImpliedVolBoundsError, BracketError) as e:
            failures += 1
            logger.warning(f"IV inversion failed at T={maturity:.4f}, K={k:.4f}: {e}")
            continue
        vega = bs_vega(s0, k, maturity, ivs[j])
        iv_stderrs[j] = stderrs[j] / vega if vega > 0 else np.inf
    smile = IVSmile(maturity, strikes, prices, stderrs, ivs, iv_stderrs, failures)
    violations = smile.arbitrage_violations(s0)
    if violations:
        logger.warning(f"Smile T={maturity:.4f}: {violations} strikes violate static no-arbitrage beyond MC noise")
    return smile


@dataclass(frozen=True)
class IVErrorReport:
    """Relative implied-vol error |IV_full - IV_red| / IV_full per strike, with error bars."""
    maturity: float
    strikes: np.ndarray
    rel_errors: np.ndarray
    rel_error_stderrs: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.nanmax(self.rel_errors)) if np.any(np.isfinite(self.rel_errors)) else float("nan")


def iv_error_report(full: IVSmile, reduced: IVSmile) -> IVErrorReport:
    """
    Relative IV errors; error bars combine both smiles' IV standard errors.

    :raises ValueError: strikes or maturities differ.
    """
    if full.maturity != reduced.maturity or not np.array_equal(full.strikes, reduced.strikes):
        raise ValueError("Smiles must share maturity and strikes.")
    rel = np.abs(full.ivs - reduced.ivs) / full.ivs
    bars = np.sqrt(full.iv_stderrs**2 + reduced.iv_stderrs**2) / full.ivs
    return IVErrorReport(full.maturity, full.strikes, rel, bars)


def write_smile_csv(path: Union[str, Path], smiles) -> None:
    """CSV with columns T, K, price, stderr, iv, iv_stderr."""
    with open(path, "w") as f:
        f.write("T,K,price,stderr,iv,iv_stderr\n")
        for smile in smiles:
            for row in smile.rows():
                f.write(",".join(repr(float(x)) for x in row) + "\n")


def read_smile_csv(path: Union[str, Path]) -> list[IVSmile]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    smiles = []
    for T in np.unique(data[:, 0]):
        rows = data[data[:, 0] == T]
        ivs = rows[:, 4]
        smiles.append(IVSmile(float(T), rows[:, 1], rows[:, 2], rows[:, 3], ivs, rows[:, 5], int(np.sum(np.isnan(ivs)))))
    return smiles
