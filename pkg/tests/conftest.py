import numpy as np
import pytest

from algebra.words import BasisOrder
from system.signature_sde import assemble_system


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def small_system():
    """d=2, m=2 signature system (n=7) with a unit-variance driver and a random output row."""
    order = BasisOrder(2, 2)
    L = np.random.default_rng(11).normal(size=(1, order.n))
    return assemble_system(2, 2, np.array([[1.0]]), L=L)


@pytest.fixture
def empty_word_system():
    """Same system with y = <empty word, Sig> = 1, whose output Gramian has rank one."""
    return assemble_system(2, 2, np.array([[1.0]]))


def time_extended_batch(rng, n_paths: int, n_steps: int, d: int, horizon: float = 1.0) -> np.ndarray:
    """(B, M+1, d) Brownian drivers with time as the first coordinate."""
    h = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    out = np.zeros((n_paths, n_steps + 1, d))
    out[:, :, 0] = times
    out[:, 1:, 1:] = np.cumsum(rng.normal(scale=np.sqrt(h), size=(n_paths, n_steps, d - 1)), axis=1)
    return out
