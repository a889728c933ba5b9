# system/signature_sde.py
"""
Coordinate form of the truncated-signature SDE driven by a time-extended
Brownian motion (t, B^2, ..., B^d) with E[B_t B_t^T] = K t:

    dX = A X dt + sum_{i>=2} N_i X dB^i,   X_0 = z,   Y = L X,
    A  = N_1 + 1/2 sum_{i,j>=2} k_ij N_i N_j.

N_i is the matrix of a -> a (x) e_i truncated at level m. With 0-based
coordinates, word index k maps to d*k + i, which is the 1-based rule
N_i[1 + (k-1) d + i, k] = 1 shifted by one in both indices.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse

from algebra.words import BasisOrder, LinearFunctional, dim_truncated
from utils.defaults import PSD_TOL
from utils.errors import CorrelationError, InvariantViolationError
from utils.logger import get_logger

logger = get_logger(__name__)

SparseMatrix = sparse.csc_matrix


def build_vector_field_matrices(d: int, m: int) -> list[SparseMatrix]:
    """
    Sparse matrices N_1..N_d representing right multiplication by e_i in T^m(R^d).

    :param d: Alphabet size (d >= 1).
    :param m: Truncation level (m >= 1).
    :return: d CSC matrices of shape (n, n), each with (d^m - 1)/(d - 1) unit entries.
    """
    if d < 1 or m < 1:
        raise ValueError(f"Need d >= 1 and m >= 1, got d={d}, m={m}.")
    n = dim_truncated(d, m)
    n_cols = dim_truncated(d, m - 1)  # words of length < m
    cols = np.arange(n_cols)
    matrices = []
    for i in range(1, d + 1):
        rows = d * cols + i
        mat = sparse.csc_matrix((np.ones(n_cols), (rows, cols)), shape=(n, n))
        mat.sort_indices()
        matrices.append(mat)
    logger.debug(f"Built {d} vector-field matrices of size {n} with {n_cols} entries each")
    return matrices


@dataclass(frozen=True)
class NoiseCovariance:
    """
    Covariance rates K of the Brownian components (B^2, ..., B^d).

    Attributes:
        K (np.ndarray): Symmetric PSD (d-1) x (d-1) matrix.
        labels (tuple): Letter of each row of K (2..d).
    """
    K: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        K = np.atleast_2d(np.array(self.K, dtype=float))
        if K.size == 0:
            K = np.zeros((0, 0))
        if K.shape[0] != K.shape[1]:
            raise CorrelationError(f"K must be square, got shape {K.shape}.")
        if not np.allclose(K, K.T, atol=PSD_TOL, rtol=0):
            raise CorrelationError("K must be symmetric.")
        K = 0.5 * (K + K.T)
        if K.size:
            eigs = np.linalg.eigvalsh(K)
            if eigs[0] < -PSD_TOL * max(1.0, abs(eigs[-1])):
                raise CorrelationError(f"K is not positive semidefinite (smallest eigenvalue {eigs[0]:.3e}).")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        labels = tuple(self.labels) if self.labels else tuple(range(2, K.shape[0] + 2))
        if len(labels) != K.shape[0]:
            raise CorrelationError("One label per row of K is required.")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_correlation(cls, corr: np.ndarray, variances: Optional[Sequence[float]] = None) -> "NoiseCovariance":
        """
        K = D C D from a correlation matrix C and variances diag(D)^2 (default: unit variances).
        """
        corr = np.atleast_2d(np.asarray(corr, dtype=float))
        if not np.allclose(np.diag(corr), 1.0, atol=PSD_TOL):
            raise CorrelationError("Correlation matrix must have a unit diagonal.")
        if np.any(np.abs(corr) > 1 + PSD_TOL):
            raise CorrelationError("Correlations must lie in [-1, 1].")
        scale = np.ones(corr.shape[0]) if variances is None else np.sqrt(np.asarray(variances, dtype=float))
        return cls(corr * np.outer(scale, scale))

    @property
    def dim(self) -> int:
        return self.K.shape[0]

    def factor(self) -> np.ndarray:
        """F with F F^T = K, from an eigenvalue-clipped decomposition (K may be singular)."""
        if self.dim == 0:
            return np.zeros((0, 0))
        eigvals, eigvecs = np.linalg.eigh(self.K)
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def ito_drift(N: Sequence[SparseMatrix], K: NoiseCovariance) -> SparseMatrix:
    """
    Ito drift A = N_1 + 1/2 sum_{i,j=2}^d k_ij N_i N_j.

    :param N: Vector-field matrices N_1..N_d.
    :param K: Noise covariance of size (d-1) x (d-1).
    """
    if K.dim != len(N) - 1:
        raise ValueError(f"K has size {K.dim} but {len(N)} vector fields were given.")
    A = sparse.csc_matrix(N[0], copy=True)
    for a, Ni in enumerate(N[1:]):
        for b, Nj in enumerate(N[1:]):
            k = K.K[a, b]
            if k != 0.0:
                A = A + 0.5 * k * (Ni @ Nj)
    A = sparse.csc_matrix(A)
    A.eliminate_zeros()
    A.sort_indices()
    return A


def functional_to_output(functionals: Union[LinearFunctional, Sequence[LinearFunctional]],
                         order: BasisOrder) -> np.ndarray:
    """Output matrix L whose rows are the coordinate rows of the given functionals."""
    if isinstance(functionals, LinearFunctional):
        functionals = [functionals]
    return np.vstack([f.to_vector(order) for f in functionals])


def output_to_functional(L: np.ndarray, order: BasisOrder, row: int = 0) -> LinearFunctional:
    return LinearFunctional.from_vector(np.atleast_2d(L)[row], order)


@dataclass(frozen=True)
class SignatureSDE:
    """
    Full linear signature system (A, N_i, K, z, L).

    Attributes:
        d (int): Alphabet size, letter 1 is time.
        m (int): Truncation level.
        N (tuple): Vector-field matrices N_1..N_d (CSC).
        K (NoiseCovariance): Covariance rates of B^2..B^d.
        A (SparseMatrix): Ito drift.
        z (np.ndarray): Initial state.
        L (np.ndarray): (p, n) output matrix.
    """
    d: int
    m: int
    N: tuple
    K: NoiseCovariance
    A: SparseMatrix
    z: np.ndarray
    L: np.ndarray

    @property
    def order(self) -> BasisOrder:
        return BasisOrder(self.d, self.m)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.L.shape[0]

    @property
    def noise_matrices(self) -> tuple:
        """N_2..N_d, the diffusion coefficients."""
        return self.N[1:]

    def verify(self) -> None:
        """Check every structural invariant; raises InvariantViolationError with a diagnostic."""
        n = dim_truncated(self.d, self.m)
        if self.z.shape != (n,) or self.L.ndim != 2 or self.L.shape[1] != n:
            raise InvariantViolationError(
                f"Shapes inconsistent with n={n}: z {self.z.shape}, L {self.L.shape}."
            )
        if len(self.N) != self.d or self.K.dim != self.d - 1:
            raise InvariantViolationError(f"Need {self.d} vector fields and a {self.d - 1}-dimensional K.")
        levels = BasisOrder(self.d, self.m).levels()
        expected_nnz = dim_truncated(self.d, self.m - 1)
        for i, Ni in enumerate(self.N, start=1):
            coo = Ni.tocoo()
            if Ni.shape != (n, n) or coo.nnz != expected_nnz or not np.all(coo.data == 1.0):
                raise InvariantViolationError(
                    f"N_{i} must be {n}x{n} with {expected_nnz} unit entries, found {coo.nnz}."
                )
            # grading: level k -> level k+1, which makes every product of m+1 factors vanish
            if not np.all(levels[coo.row] == levels[coo.col] + 1):
                raise InvariantViolationError(f"N_{i} does not raise the tensor level by one.")
        diff = self.A - ito_drift(self.N, self.K)
        if diff.nnz and np.max(np.abs(diff.data)) > 0.0:
            raise InvariantViolationError("A differs from N_1 + 1/2 sum k_ij N_i N_j.")
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.L))):
            raise InvariantViolationError("z and L must be finite.")


def assemble_system(
    d: int,
    m: int,
    K: Union[NoiseCovariance, np.ndarray],
    L: Optional[Union[np.ndarray, LinearFunctional, Sequence[LinearFunctional]]] = None,
    z: Optional[np.ndarray] = None,
) -> SignatureSDE:
    """
    Assemble and verify the Ito signature system.

    :param d: Alphabet size.
    :param m: Truncation level.
    :param K: Noise covariance (or its matrix).
    :param L: Output matrix, or functional(s) to transcribe by word index (default: empty-word row).
    :param z: Initial state (default: first canonical basis vector).
    :return: Verified SignatureSDE.
    """
    order = BasisOrder(d, m)
    K = K if isinstance(K, NoiseCovariance) else NoiseCovariance(K)
    N = tuple(build_vector_field_matrices(d, m))
    A = ito_drift(N, K)
    if z is None:
        z = np.zeros(order.n)
        z[0] = 1.0
    if L is None:
        L = np.zeros((1, order.n))
        L[0, 0] = 1.0
    elif isinstance(L, LinearFunctional) or (isinstance(L, (list, tuple)) and L and isinstance(L[0], LinearFunctional)):
        L = functional_to_output(L, order)
    z = np.array(z, dtype=float).ravel()
    L = np.atleast_2d(np.array(L, dtype=float))
    system = SignatureSDE(d=d, m=m, N=N, K=K, A=A, z=z, L=L)
    try:
        system.verify()
    except InvariantViolationError as e:
        logger.error(f"Signature system d={d}, m={m} failed verification: {e}")
        raise
    logger.info(f"Assembled signature system d={d}, m={m}, n={order.n}, p={L.shape[0]}, nnz(A)={A.nnz}")
    return system
