# utils/accumulators.py
from typing import Optional

import numpy as np


def mean_and_stderr(samples: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """
    Sample mean and Monte Carlo standard error along an axis.

    :param samples: Array of i.i.d. samples.
    :param axis: Axis holding the samples.
    :return: (mean, std / sqrt(count)); the standard error is 0 for a single sample.
    """
    samples = np.asarray(samples, dtype=float)
    count = samples.shape[axis]
    if count == 0:
        raise ValueError("Cannot average an empty sample.")
    # numpy reductions use pairwise summation, so the result does not depend on chunking
    mean = np.mean(samples, axis=axis)
    if count == 1:
        return mean, np.zeros_like(mean)
    stderr = np.std(samples, axis=axis, ddof=1) / np.sqrt(count)
    return mean, stderr


class KahanAccumulator:
    """
    Compensated (Kahan) summation of equally shaped arrays.

    Attributes:
        total (np.ndarray): Running sum.
        compensation (np.ndarray): Lost low-order bits of the running sum.
        count (int): Number of terms added so far.
    """

    def __init__(self, shape: Optional[tuple] = None):
        self.total = None if shape is None else np.zeros(shape)
        self.compensation = None if shape is None else np.zeros(shape)
        self.count = 0

    def update(self, term: np.ndarray) -> np.ndarray:
        """
        Add a term to the running sum.

        :param term: Array with the accumulator's shape.
        :return: Updated running sum.
        """
        term = np.asarray(term, dtype=float)
        if self.total is None:
            self.total = np.zeros_like(term)
            self.compensation = np.zeros_like(term)
        y = term - self.compensation
        t = self.total + y
        self.compensation = (t - self.total) - y
        self.total = t
        self.count += 1
        return self.total

    @property
    def value(self) -> np.ndarray:
        if self.total is None:
            raise ValueError("Nothing accumulated yet.")
        return self.total
