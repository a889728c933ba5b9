# algebra/signature.py
"""
Truncated signatures of piecewise-linear, time-extended paths.

Tensors are flat coordinate vectors in the order of algebra.words.BasisOrder; the
level-k block is the row-major flattening of a d x ... x d array, so the
truncated tensor product of two blocks is an outer product followed by a reshape.
All array helpers accept arbitrary leading batch dimensions.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from algebra.words import BasisOrder
from utils.errors import TruncationError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class TruncatedTensor:
    """
    Element of T^m(R^d) in canonical coordinates.

    Attributes:
        order (BasisOrder): Coordinate system.
        coeffs (np.ndarray): Dense coefficient vector of length order.n.
    """
    order: BasisOrder
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (self.order.n,):
            raise TruncationError(f"Expected {self.order.n} coefficients, got shape {coeffs.shape}.")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def unit(cls, order: BasisOrder) -> "TruncatedTensor":
        return cls(order, unit_coeffs(order))

    def level(self, k: int) -> np.ndarray:
        """Level-k block reshaped to a k-fold d-dimensional array."""
        return self.coeffs[self.order.level_slice(k)].reshape((self.order.d,) * k)

    def __matmul__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return chen_concat(self, other)


@dataclass(frozen=True)
class PathSample:
    """
    Sampled time-extended path: values[j, 0] == times[j].

    Attributes:
        times (np.ndarray): Grid 0 = t_0 < ... < t_M = T.
        values (np.ndarray): (M+1, d) path values.
    """
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or values.shape[0] != times.shape[0] or values.ndim != 2:
            raise ValueError(f"Shape mismatch: times {times.shape}, values {values.shape}.")
        if np.any(np.diff(times) <= 0):
            raise ValueError("Time grid must be strictly increasing.")
        if not np.array_equal(values[:, 0], times):
            raise ValueError("First path coordinate must equal the grid time.")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def time_extended(cls, times: np.ndarray, increments: np.ndarray) -> "PathSample":
        """
        Build (t, X^2, ..., X^d) from grid times and (M, d-1) driver increments, X_0 = 0.
        """
        times = np.asarray(times, dtype=float)
        increments = np.asarray(increments, dtype=float).reshape(len(times) - 1, -1)
        levels = np.vstack([np.zeros((1, increments.shape[1])), np.cumsum(increments, axis=0)])
        return cls(times, np.column_stack([times, levels]))

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def unit_coeffs(order: BasisOrder, batch_shape: tuple = ()) -> np.ndarray:
    out = np.zeros(tuple(batch_shape) + (order.n,))
    out[..., 0] = 1.0
    return out


def segment_exponential_coeffs(dx: np.ndarray, order: BasisOrder) -> np.ndarray:
    """
    Tensor exponential of straight-line increments: level k equals dx^{(x)k} / k!.

    :param dx: (..., d) increments.
    :return: (..., n) coefficients.
    """
    dx = np.asarray(dx, dtype=float)
    if dx.shape[-1] != order.d:
        raise TruncationError(f"Increment of dimension {dx.shape[-1]} for alphabet size {order.d}.")
    batch = dx.shape[:-1]
    out = np.empty(batch + (order.n,))
    block = np.ones(batch + (1,))
    out[..., 0] = 1.0
    for k in range(1, order.m + 1):
        # level-by-level recursion, no factorials formed
        block = (block[..., :, None] * dx[..., None, :]).reshape(batch + (order.d ** k,)) / k
        out[..., order.level_slice(k)] = block
    return out


def tensor_product_coeffs(a: np.ndarray, b: np.ndarray, order: BasisOrder) -> np.ndarray:
    """Truncated tensor product, level k = sum_{i+j=k} a_i (x) b_j, batched over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(batch + (order.n,))
    for k in range(order.m + 1):
        target = out[..., order.level_slice(k)]
        for i in range(k + 1):
            ai = a[..., order.level_slice(i)]
            bj = b[..., order.level_slice(k - i)]
            target += (ai[..., :, None] * bj[..., None, :]).reshape(batch + (order.d ** k,))
    return out


def segment_exponential(dx: Sequence[float], order: BasisOrder) -> TruncatedTensor:
    """Signature of the straight segment with increment dx."""
    return TruncatedTensor(order, segment_exponential_coeffs(np.asarray(dx, dtype=float), order))


def chen_concat(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Truncated tensor product a (x) b, the signature of a concatenated path."""
    if a.order != b.order:
        raise TruncationError(f"Basis orders differ: {a.order} vs {b.order}.")
    return TruncatedTensor(a.order, tensor_product_coeffs(a.coeffs, b.coeffs, a.order))


def signature_stream_batch(
    values: np.ndarray,
    order: BasisOrder,
    start: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Signature streams of a batch of piecewise-linear paths.

    :param values: (B, M+1, d) path values.
    :param order: Basis order with order.d == d.
    :param start: Optional (B, n) initial tensors (default: unit).
    :return: (B, M+1, n) array; entry j is the signature over [t_0, t_j] (left-multiplied by start).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 3:
        raise ValueError(f"Expected (B, M+1, d) values, got shape {values.shape}.")
    n_batch, n_points, _ = values.shape
    stream = np.empty((n_batch, n_points, order.n))
    current = unit_coeffs(order, (n_batch,)) if start is None else np.array(start, dtype=float)
    stream[:, 0] = current
    increments = np.diff(values, axis=1)
    for j in range(n_points - 1):
        current = tensor_product_coeffs(current, segment_exponential_coeffs(increments[:, j], order), order)
        stream[:, j + 1] = current
    return stream


def path_signature_stream(
    path: PathSample,
    order: BasisOrder,
    start: Optional[TruncatedTensor] = None,
) -> list[TruncatedTensor]:
    """
    Signatures S(t_0), ..., S(t_M) of a time-extended piecewise-linear path.

    :param path: Sampled path with first coordinate equal to time.
    :param order: Basis order; order.d must equal the path dimension.
    :param start: Tensor to restart the stream from (default: unit).
    :return: M+1 tensors with S(t_{j+1}) = S(t_j) (x) exp(values[j+1] - values[j]).
    """
    if path.dim != order.d:
        raise TruncationError(f"Path of dimension {path.dim} for alphabet size {order.d}.")
    init = None if start is None else start.coeffs[None, :]
    stream = signature_stream_batch(path.values[None], order, init)[0]
    return [TruncatedTensor(order, row) for row in stream]
