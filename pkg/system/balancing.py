# system/balancing.py
"""
Square-root balanced truncation of the signature system.

With P = L_P L_P^T, Q = L_Q L_Q^T and the SVD L_Q^T L_P = U S Vh, the projection
bases V = L_P Vh^T S^{-1/2} and W = L_Q U S^{-1/2} satisfy W^T V = I and
V^T Q V = W^T P W = S. Truncating to the leading n_red columns gives the
Petrov-Galerkin reduced system (W^T A V, W^T N_i V, W^T z, L V).
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, sparse

from system.signature_sde import NoiseCovariance, SignatureSDE
from utils.defaults import BIORTH_TOL, EIG_CLIP_REL, RANK_TOL
from utils.errors import GramianInconsistencyError, InvariantViolationError, RankDeficiencyError
from utils.logger import get_logger

logger = get_logger(__name__)


def _dense(M) -> np.ndarray:
    return M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=float)


def _symmetric_eigh(M: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenpairs of a symmetric PSD matrix; rejects eigenvalues below -1e-10 * max."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}.")
    eigvals, eigvecs = linalg.eigh(0.5 * (M + M.T))
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    top = max(eigvals[0], 0.0) if eigvals.size else 0.0
    if eigvals.size and eigvals[-1] < -EIG_CLIP_REL * top and eigvals[-1] < -np.finfo(float).tiny:
        raise GramianInconsistencyError(
            f"{name} is indefinite: smallest eigenvalue {eigvals[-1]:.3e}, largest {top:.3e}."
        )
    return eigvals, eigvecs


def factor_psd(M: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """
    Low-rank factor F with F F^T ~ M from an eigenvalue-clipped decomposition.

    :param M: Symmetric PSD matrix.
    :param rank_tol: Eigenvalues at or below rank_tol * lambda_max are dropped.
    :return: (n, r) factor; r = 0 when M is numerically zero.
    """
    eigvals, eigvecs = _symmetric_eigh(M, "matrix")
    top = eigvals[0] if eigvals.size else 0.0
    if top <= 0.0:
        return np.zeros((M.shape[0], 0))
    keep = eigvals > rank_tol * top
    return eigvecs[:, keep] * np.sqrt(eigvals[keep])


@dataclass(frozen=True)
class BalancingResult:
    """
    Hankel values and Petrov-Galerkin projection bases.

    Attributes:
        sigma (np.ndarray): Nonincreasing Hankel values, length r.
        V_proj (np.ndarray): (n, r) right projection basis.
        W_proj (np.ndarray): (n, r) left projection basis, W^T V = I.
        rank_tol (float): Relative clipping tolerance used.
    """
    sigma: np.ndarray
    V_proj: np.ndarray
    W_proj: np.ndarray
    rank_tol: float

    @property
    def r(self) -> int:
        return self.sigma.shape[0]

    def biorthogonality_error(self, n_red: Optional[int] = None) -> float:
        """Frobenius norm of W^T V - I on the leading n_red columns."""
        k = self.r if n_red is None else n_red
        G = self.W_proj[:, :k].T @ self.V_proj[:, :k]
        return float(np.linalg.norm(G - np.eye(k)))


def balance(P: np.ndarray, Q: np.ndarray, rank_tol: float = RANK_TOL, strict: bool = False) -> BalancingResult:
    """
    Square-root balancing of the Gramian pair.

    Columns belonging to Hankel values close to rank_tol * sigma_1 are scaled by
    1/sqrt(sigma_k) and can lose biorthogonality to roundoff. With strict=False this
    is only logged, and callers that keep such dimensions should check
    BalancingResult.biorthogonality_error(n_red) themselves.

    :param P: State Gramian.
    :param Q: Output Gramian.
    :param rank_tol: Relative tolerance for the Gramian factors and the Hankel values.
    :param strict: Raise when |W^T V - I|_F exceeds BIORTH_TOL * sqrt(r).
    :return: BalancingResult with r = numerical rank of L_Q^T L_P.
    :raises InvariantViolationError: strict and the bases are not biorthogonal.
    """
    L_P = factor_psd(P, rank_tol)
    L_Q = factor_psd(Q, rank_tol)
    if L_P.shape[1] == 0 or L_Q.shape[1] == 0:
        raise RankDeficiencyError("Gramian is numerically zero; nothing to balance.")

    U, s, Vh = linalg.svd(L_Q.T @ L_P, full_matrices=False)
    if s[0] <= 0.0:
        raise RankDeficiencyError("P and Q have orthogonal ranges; all Hankel values vanish.")
    r = int(np.count_nonzero(s > rank_tol * s[0]))
    sigma = s[:r]
    scale = 1.0 / np.sqrt(sigma)
    V_proj = (L_P @ Vh[:r].T) * scale
    W_proj = (L_Q @ U[:, :r]) * scale

    result = BalancingResult(sigma=sigma, V_proj=V_proj, W_proj=W_proj, rank_tol=rank_tol)
    logger.info(
        f"Balanced: rank(P)={L_P.shape[1]}, rank(Q)={L_Q.shape[1]}, r={r}, "
        f"sigma_1={sigma[0]:.3e}, sigma_r={sigma[-1]:.3e}"
    )
    bi_err = result.biorthogonality_error()
    if bi_err > BIORTH_TOL * np.sqrt(r):
        if strict:
            logger.error(f"Projection bases lose biorthogonality: |W^T V - I|_F = {bi_err:.3e}")
            raise InvariantViolationError(
                f"|W^T V - I|_F = {bi_err:.3e} exceeds {BIORTH_TOL:g} * sqrt({r}); raise rank_tol."
            )
        logger.warning(f"Projection bases lose biorthogonality: |W^T V - I|_F = {bi_err:.3e}")
    return result


def hankel_spectrum(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """
    All n Hankel values sqrt(eig(PQ)), nonincreasing.

    eig(PQ) is computed as eig(F^T Q F) with F F^T = P, which is symmetric and has the
    same nonzero spectrum.
    """
    eigvals, eigvecs = _symmetric_eigh(P, "P")
    F = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    S = F.T @ np.asarray(Q, dtype=float) @ F
    mu = linalg.eigvalsh(0.5 * (S + S.T))[::-1]
    top = max(mu[0], 0.0)
    if mu[-1] < -EIG_CLIP_REL * top and mu[-1] < -np.finfo(float).tiny:
        logger.error(f"PQ has a negative eigenvalue {mu[-1]:.3e} (largest {top:.3e})")
        raise GramianInconsistencyError(f"PQ has a large negative eigenvalue {mu[-1]:.3e}.")
    return np.sqrt(np.clip(mu, 0.0, None))


@dataclass(frozen=True)
class ReducedSystem:
    """
    Projected signature system of dimension n_red.

    Attributes:
        d (int): Alphabet size of the driver.
        m (int): Truncation level of the system it was reduced from.
        A (np.ndarray): (n_red, n_red) drift.
        N (tuple): d dense (n_red, n_red) vector-field matrices.
        K (NoiseCovariance): Shared with the full system.
        z (np.ndarray): Reduced initial state.
        L (np.ndarray): (p, n_red) output matrix.
        V (np.ndarray): Right projection basis that produced it (may be None).
        W (np.ndarray): Left projection basis that produced it (may be None).
    """
    d: int
    m: int
    A: np.ndarray
    N: tuple
    K: NoiseCovariance
    z: np.ndarray
    L: np.ndarray
    V: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None

    def __post_init__(self):
        k = self.z.shape[0]
        if k < 1:
            raise ValueError("Reduced dimension must be at least 1.")
        if self.A.shape != (k, k) or any(Ni.shape != (k, k) for Ni in self.N) or self.L.shape[1] != k:
            raise ValueError(f"Inconsistent reduced system shapes for n_red={k}.")
        if len(self.N) != self.d or self.K.dim != self.d - 1:
            raise ValueError(f"Need {self.d} vector fields and a {self.d - 1}-dimensional K.")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def n_red(self) -> int:
        return self.n

    @property
    def p(self) -> int:
        return self.L.shape[0]

    @property
    def noise_matrices(self) -> tuple:
        return self.N[1:]


def project(system, V: np.ndarray, W: np.ndarray) -> ReducedSystem:
    """Petrov-Galerkin projection (W^T A V, W^T N_i V, W^T z, L V)."""
    A_red = W.T @ _dense(system.A @ V)
    N_red = tuple(W.T @ _dense(Ni @ V) for Ni in system.N)
    z_red = W.T @ np.asarray(system.z, dtype=float)
    L_red = np.asarray(system.L, dtype=float) @ V
    return ReducedSystem(d=system.d, m=system.m, A=A_red, N=N_red, K=system.K, z=z_red, L=L_red, V=V, W=W)


def reduce(system: SignatureSDE, bal: BalancingResult, n_red: int) -> ReducedSystem:
    """
    Reduced system of dimension n_red from the leading balanced coordinates.

    :param system: Full signature system.
    :param bal: Result of balance() on its Gramians.
    :param n_red: 1 <= n_red <= r.
    """
    if n_red < 1:
        raise ValueError(f"Reduced dimension must be at least 1, got {n_red}.")
    if n_red > bal.r:
        raise RankDeficiencyError(f"Reduced dimension {n_red} exceeds the numerical rank r={bal.r}.")
    if bal.V_proj.shape[0] != system.n:
        raise ValueError(f"Projection bases have {bal.V_proj.shape[0]} rows, system has n={system.n}.")
    reduced = project(system, bal.V_proj[:, :n_red], bal.W_proj[:, :n_red])
    logger.debug(f"Reduced n={system.n} -> {n_red} (sigma_next={bal.sigma[n_red] if n_red < bal.r else 0.0:.3e})")
    return reduced


def transform_system(system, T: np.ndarray, T_inv: Optional[np.ndarray] = None) -> ReducedSystem:
    """
    Equivalent system in coordinates x' = T x: (T A T^-1, T N_i T^-1, T z, L T^-1).
    """
    T = np.asarray(T, dtype=float)
    T_inv = linalg.inv(T) if T_inv is None else np.asarray(T_inv, dtype=float)
    return project(system, T_inv, T.T)


def balanced_realization(P: np.ndarray, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Balancing transformation T = S^{1/2} U^T L_P^{-1} for nonsingular P, Q.

    With P = L_P L_P^T (Cholesky) and L_P^T Q L_P = U S^2 U^T, both T P T^T and
    T^-T Q T^-1 equal diag(S).

    :return: (T, T^-1, sigma)
    """
    try:
        L_P = linalg.cholesky(0.5 * (P + P.T), lower=True)
    except linalg.LinAlgError as e:
        logger.error(f"P is not positive definite: {e}")
        raise RankDeficiencyError("balanced_realization needs a positive definite P; use balance().") from e
    S2, U = linalg.eigh(L_P.T @ Q @ L_P)
    S2, U = S2[::-1], U[:, ::-1]
    if S2[-1] <= 0.0:
        raise RankDeficiencyError("balanced_realization needs a positive definite Q; use balance().")
    sigma = np.sqrt(S2)
    T = (np.sqrt(sigma)[:, None] * U.T) @ linalg.solve_triangular(L_P, np.eye(P.shape[0]), lower=True)
    T_inv = (L_P @ U) / np.sqrt(sigma)
    return T, T_inv, sigma


def _drift_states(system, times: np.ndarray) -> np.ndarray:
    """exp(A t) z for every t; nilpotent sparse drifts use the terminating series."""
    z = np.asarray(system.z, dtype=float)
    if sparse.issparse(system.A):
        powers = [z]
        for _ in range(system.m):
            powers.append(system.A @ powers[-1])
        out = np.zeros((len(times), z.shape[0]))
        for i, t in enumerate(times):
            coeff = 1.0
            for j, v in enumerate(powers):
                out[i] += coeff * v
                coeff *= t / (j + 1)
        return out
    return np.stack([linalg.expm(system.A * t) @ z for t in times])


def drift_output_gap(full, reduced, times: Sequence[float]) -> np.ndarray:
    """
    |L_red exp(A_red t) z_red - L exp(A t) z| on a time grid (noise switched off).

    :param full: Full (or reference) system.
    :param reduced: Reduced system with the same output dimension.
    :param times: Evaluation times.
    :return: Gap per time.
    """
    times = np.asarray(times, dtype=float)
    y_full = _drift_states(full, times) @ np.asarray(full.L).T
    y_red = _drift_states(reduced, times) @ np.asarray(reduced.L).T
    return np.linalg.norm(y_red - y_full, axis=1)
