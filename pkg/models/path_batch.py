# models/path_batch.py
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from utils.errors import NonFiniteStateError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class PathBatch:
    """
    Simulated ground-truth paths on a uniform grid.

    Attributes:
        model (str): 'bergomi' or 'rough_bergomi'.
        times (np.ndarray): (M+1,) grid, times[0] = 0.
        prices (np.ndarray): (B, M+1) asset prices S_t.
        variance (np.ndarray): (B, M+1) instantaneous variance v_t.
        drivers (np.ndarray): (B, M+1, d) time-extended driver (t, Z, W^1, ...), starting at (0, 0, ...).
        seed (int): Seed the batch was drawn with.
        first_path (int): Global index of the first path (per-path streams are keyed by it).
    """
    model: str
    times: np.ndarray
    prices: np.ndarray
    variance: np.ndarray
    drivers: np.ndarray
    seed: int
    first_path: int = 0

    def __post_init__(self):
        B, M1 = self.prices.shape
        if self.times.shape != (M1,) or self.variance.shape != (B, M1) or self.drivers.shape[:2] != (B, M1):
            raise ValueError(
                f"Inconsistent batch shapes: times {self.times.shape}, prices {self.prices.shape}, "
                f"variance {self.variance.shape}, drivers {self.drivers.shape}."
            )
        bad = ~np.all(np.isfinite(self.prices), axis=1)
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise NonFiniteStateError(f"Non-finite price on path {self.first_path + idx}.", self.first_path + idx)

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def d(self) -> int:
        return self.drivers.shape[2]

    @property
    def brownian_increments(self) -> np.ndarray:
        """(B, M, d-1) increments of the Brownian driver components."""
        return np.diff(self.drivers[:, :, 1:], axis=1)

    def subset(self, start: int, stop: int) -> "PathBatch":
        return PathBatch(
            model=self.model,
            times=self.times,
            prices=self.prices[start:stop],
            variance=self.variance[start:stop],
            drivers=self.drivers[start:stop],
            seed=self.seed,
            first_path=self.first_path + start,
        )

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "wb") as f:
            np.savez(
                f,
                model=np.array(self.model),
                times=self.times,
                prices=self.prices,
                variance=self.variance,
                drivers=self.drivers,
                seed=np.array(self.seed),
                first_path=np.array(self.first_path),
            )
        logger.info(f"Saved {self.n_paths} {self.model} paths to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PathBatch":
        with np.load(path, allow_pickle=False) as data:
            return cls(
                model=str(data["model"]),
                times=data["times"],
                prices=data["prices"],
                variance=data["variance"],
                drivers=data["drivers"],
                seed=int(data["seed"]),
                first_path=int(data["first_path"]),
            )
