# system/gramians.py
"""
Finite-horizon Gramians of the linear signature system.

    L(Z)  = A Z + Z A^T + sum_{i,j>=2} k_ij N_i Z N_j^T
    L*(Z) = A^T Z + Z A + sum_{i,j>=2} k_ij N_i^T Z N_j

P = int_0^T E[Phi z z^T Phi^T] du and Q = int_0^T E[Phi^T L^T L Phi] du. Since
every N_i is nilpotent of order m+1, L^j = 0 for j >= 2m+1 and both integrals are
finite sums  sum_{j=0}^{2m} T^{j+1}/(j+1)! L^j(M).
"""
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from utils.accumulators import KahanAccumulator
from utils.defaults import EIG_CLIP_REL, ODE_TOL, SYMMETRY_TOL
from utils.errors import GramianInconsistencyError, StepSizeUnderflowError
from utils.logger import get_logger

logger = get_logger(__name__)

_HEADER = struct.Struct("<qd")  # n, horizon


def _operator_parts(system):
    """(A, [N_2..N_d], K) for a full or reduced system."""
    return system.A, list(system.noise_matrices), np.asarray(system.K.K)


def _check_square(system, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    n = system.A.shape[0]
    if Z.shape != (n, n):
        raise ValueError(f"Expected a {n}x{n} matrix, got shape {Z.shape}.")
    return Z


def _noise_term(noise: list, K: np.ndarray, Z: np.ndarray, adjoint: bool, threads: int) -> np.ndarray:
    if not noise:
        return np.zeros_like(Z)
    if adjoint:
        # sum_{a,b} k_ab N_a^T Z N_b
        right = [(Nb.T @ Z.T).T for Nb in noise]            # Z N_b
        left = [Na.T for Na in noise]
    else:
        # sum_{a,b} k_ab N_a Z N_b^T
        right = [(Nb @ Z.T).T for Nb in noise]              # Z N_b^T
        left = noise

    def row(a: int) -> np.ndarray:
        inner = sum(K[a, b] * right[b] for b in range(len(noise)) if K[a, b] != 0.0)
        if isinstance(inner, int):
            return np.zeros_like(Z)
        return np.asarray(left[a] @ inner)

    if threads > 1 and len(noise) > 1:
        with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="LyapunovWorker") as pool:
            parts = list(pool.map(row, range(len(noise))))
    else:
        parts = [row(a) for a in range(len(noise))]
    return np.sum(parts, axis=0)


def lyapunov_apply(system, Z: np.ndarray, threads: int = 1) -> np.ndarray:
    """
    Lyapunov operator L(Z) = A Z + Z A^T + sum k_ij N_i Z N_j^T.

    :param system: SignatureSDE or ReducedSystem.
    :param Z: (n, n) matrix.
    :param threads: Worker threads for the i,j double sum.
    """
    Z = _check_square(system, Z)
    A, noise, K = _operator_parts(system)
    AZ = np.asarray(A @ Z)
    ZAt = np.asarray(A @ Z.T).T
    return AZ + ZAt + _noise_term(noise, K, Z, adjoint=False, threads=threads)


def lyapunov_adjoint_apply(system, Z: np.ndarray, threads: int = 1) -> np.ndarray:
    """Frobenius adjoint L*(Z) = A^T Z + Z A + sum k_ij N_i^T Z N_j."""
    Z = _check_square(system, Z)
    A, noise, K = _operator_parts(system)
    AtZ = np.asarray(A.T @ Z)
    ZA = np.asarray(A.T @ Z.T).T
    return AtZ + ZA + _noise_term(noise, K, Z, adjoint=True, threads=threads)


def _series(system, M: np.ndarray, horizon: float, adjoint: bool, terms: Optional[int], threads: int) -> np.ndarray:
    if horizon <= 0:
        raise ValueError(f"Horizon must be positive, got {horizon}.")
    n_terms = 2 * system.m + 1 if terms is None else terms
    apply = lyapunov_adjoint_apply if adjoint else lyapunov_apply
    acc = KahanAccumulator()
    term = 0.5 * (M + M.T)
    coeff = horizon  # T^{j+1} / (j+1)!
    for j in range(n_terms):
        if j > 0 and not np.any(term):
            logger.debug(f"series terminated after {j} terms")
            break
        acc.update(coeff * term)
        logger.debug(f"series term {j}: |L^j(M)|_F = {np.linalg.norm(term):.3e}")
        term = apply(system, term, threads=threads)
        term = 0.5 * (term + term.T)
        coeff *= horizon / (j + 2)
    return acc.value


def gramian_P(system, horizon: float, terms: Optional[int] = None, threads: int = 1) -> np.ndarray:
    """
    Reachability-type Gramian P = sum_{j=0}^{2m} T^{j+1}/(j+1)! L^j(z z^T).

    :param system: SignatureSDE.
    :param horizon: T > 0.
    :param terms: Number of series terms (default 2m+1, where the series terminates).
    :param threads: Worker threads for the Lyapunov operator.
    """
    z = np.asarray(system.z, dtype=float)
    return _series(system, np.outer(z, z), horizon, adjoint=False, terms=terms, threads=threads)


def gramian_Q(system, horizon: float, terms: Optional[int] = None, threads: int = 1) -> np.ndarray:
    """Output-relevance Gramian Q = sum_{j=0}^{2m} T^{j+1}/(j+1)! (L*)^j(L^T L)."""
    L = np.atleast_2d(np.asarray(system.L, dtype=float))
    if not np.any(L):
        raise ValueError("Output matrix L is zero.")
    return _series(system, L.T @ L, horizon, adjoint=True, terms=terms, threads=threads)


def lyapunov_matrix(system) -> sparse.csr_matrix:
    """
    Kronecker form K = I (x) A + A (x) I + sum k_ij N_j (x) N_i acting on column-major vec(Z).

    Only meant as a small-n oracle: the matrix has n^2 rows.
    """
    A, noise, K = _operator_parts(system)
    n = A.shape[0]
    eye = sparse.identity(n, format="csr")
    out = sparse.kron(eye, A) + sparse.kron(A, eye)
    for a, Na in enumerate(noise):
        for b, Nb in enumerate(noise):
            if K[a, b] != 0.0:
                out = out + K[a, b] * sparse.kron(Nb, Na)
    return sparse.csr_matrix(out)


def gramian_P_vectorized(system, horizon: float) -> np.ndarray:
    """vec(P) = sum_j T^{j+1}/(j+1)! K^j vec(z z^T), reshaped to a matrix."""
    z = np.asarray(system.z, dtype=float)
    return _vectorized_series(lyapunov_matrix(system), np.outer(z, z), horizon, 2 * system.m + 1)


def gramian_Q_vectorized(system, horizon: float) -> np.ndarray:
    L = np.atleast_2d(system.L)
    return _vectorized_series(lyapunov_matrix(system).T.tocsr(), L.T @ L, horizon, 2 * system.m + 1)


def _vectorized_series(kmat, M: np.ndarray, horizon: float, n_terms: int) -> np.ndarray:
    n = M.shape[0]
    v = M.ravel(order="F")
    total = np.zeros_like(v)
    coeff = horizon
    for j in range(n_terms):
        total += coeff * v
        v = kmat @ v
        coeff *= horizon / (j + 2)
    return total.reshape((n, n), order="F")


def _solve_lyapunov_flow(system, M: np.ndarray, t: float, adjoint: bool, integrate: bool) -> np.ndarray:
    M = _check_square(system, M)
    if t < 0:
        raise ValueError(f"Time must be nonnegative, got {t}.")
    n = M.shape[0]
    if t == 0:
        return np.zeros_like(M) if integrate else M.copy()
    apply = lyapunov_adjoint_apply if adjoint else lyapunov_apply

    def rhs(_, y):
        Z = y[: n * n].reshape(n, n)
        dZ = apply(system, Z).ravel()
        return np.concatenate([dZ, Z.ravel()]) if integrate else dZ

    y0 = M.ravel() if not integrate else np.concatenate([M.ravel(), np.zeros(n * n)])
    sol = solve_ivp(rhs, (0.0, t), y0, method="RK45", rtol=ODE_TOL, atol=ODE_TOL * 1e-2)
    if sol.status != 0:
        logger.error(f"Lyapunov ODE integration failed: {sol.message}")
        raise StepSizeUnderflowError(sol.message)
    y = sol.y[:, -1]
    return (y[n * n:] if integrate else y[: n * n]).reshape(n, n)


def lyapunov_ode_oracle(system, M: np.ndarray, t: float, adjoint: bool = False) -> np.ndarray:
    """
    Z(t) for dZ/dt = L(Z), Z(0) = M, by adaptive Runge-Kutta 4(5) (validation only, n <= ~100).

    :param adjoint: Integrate the adjoint flow dZ/dt = L*(Z) instead.
    :return: Z(t) = E[Phi(t,0) M Phi(t,0)^T] (or its adjoint counterpart).
    """
    return _solve_lyapunov_flow(system, M, t, adjoint=adjoint, integrate=False)


def lyapunov_ode_integral(system, M: np.ndarray, horizon: float, adjoint: bool = False) -> np.ndarray:
    """int_0^T Z(u) du for the Lyapunov flow, integrated jointly with the flow itself."""
    return _solve_lyapunov_flow(system, M, horizon, adjoint=adjoint, integrate=True)


@dataclass(frozen=True)
class GramianPair:
    """
    Symmetric PSD Gramians P, Q on the horizon [0, T].

    Attributes:
        P (np.ndarray): State Gramian.
        Q (np.ndarray): Output Gramian.
        horizon (float): T.
    """
    P: np.ndarray
    Q: np.ndarray
    horizon: float

    def __post_init__(self):
        for name in ("P", "Q"):
            M = np.asarray(getattr(self, name), dtype=float)
            scale = max(np.max(np.abs(M)), 1.0)
            if np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
                raise GramianInconsistencyError(f"{name} is not symmetric.")
            M = 0.5 * (M + M.T)
            eigs = np.linalg.eigvalsh(M)
            if eigs.size and eigs[0] < -EIG_CLIP_REL * max(eigs[-1], 0.0):
                raise GramianInconsistencyError(
                    f"{name} is indefinite: smallest eigenvalue {eigs[0]:.3e}, largest {eigs[-1]:.3e}."
                )
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.P.shape[0]


def compute_gramians(system, horizon: float, threads: int = 1) -> GramianPair:
    """P and Q of a signature system, validated."""
    logger.info(f"Computing Gramians for n={system.n}, horizon={horizon}")
    P = gramian_P(system, horizon, threads=threads)
    Q = gramian_Q(system, horizon, threads=threads)
    try:
        return GramianPair(P, Q, horizon)
    except GramianInconsistencyError as e:
        logger.error(f"Gramian validation failed: {e}")
        raise


@dataclass(frozen=True)
class GramianSpectra:
    """Eigenvalues (descending) with orthonormal eigenvectors as columns."""
    lam: np.ndarray
    p_vectors: np.ndarray
    mu: np.ndarray
    q_vectors: np.ndarray


def _sorted_eigh(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eigvals, eigvecs = np.linalg.eigh(M)
    idx = np.argsort(eigvals)[::-1]
    return eigvals[idx], eigvecs[:, idx]


def gramian_spectra(gramians: GramianPair) -> GramianSpectra:
    """Eigen-decompositions of P and Q sorted in descending order."""
    lam, p_vectors = _sorted_eigh(gramians.P)
    mu, q_vectors = _sorted_eigh(gramians.Q)
    return GramianSpectra(lam, p_vectors, mu, q_vectors)


def save_gramian(path: Union[str, Path], M: np.ndarray, horizon: float) -> None:
    """Binary export: 16-byte header (int64 n, float64 horizon) then row-major float64 entries."""
    M = np.ascontiguousarray(M, dtype="<f8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(M.shape[0], float(horizon)))
        f.write(M.tobytes(order="C"))


def load_gramian(path: Union[str, Path]) -> tuple[np.ndarray, float]:
    with open(path, "rb") as f:
        n, horizon = _HEADER.unpack(f.read(_HEADER.size))
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != n * n:
        raise GramianInconsistencyError(f"{path}: expected {n * n} entries, found {data.size}.")
    return data.reshape(n, n).copy(), horizon


def save_spectra_csv(path: Union[str, Path], spectra: GramianSpectra) -> None:
    """CSV with columns k, lambda_k, mu_k (k starting at 1)."""
    with open(path, "w") as f:
        f.write("k,lambda,mu\n")
        for k, (lam, mu) in enumerate(zip(spectra.lam, spectra.mu), start=1):
            f.write(f"{k},{float(lam)!r},{float(mu)!r}\n")
