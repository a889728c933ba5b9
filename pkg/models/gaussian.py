# models/gaussian.py
import numpy as np
from scipy import linalg

from utils.defaults import PSD_TOL
from utils.errors import CorrelationError
from utils.logger import get_logger

logger = get_logger(__name__)


def covariance_factor(cov: np.ndarray, name: str = "covariance") -> np.ndarray:
    """
    Lower factor F with F F^T = cov.

    Cholesky first; a matrix that is only PSD up to roundoff falls back to an
    eigenvalue-clipped factor with a warning.

    :param cov: Symmetric covariance matrix.
    :param name: Used in log and error messages.
    """
    cov = 0.5 * (cov + cov.T)
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        pass
    eigvals, eigvecs = linalg.eigh(cov)
    scale = max(abs(eigvals[-1]), 1.0)
    if eigvals[0] < -1e-8 * scale:
        logger.error(f"{name} is not positive semidefinite (smallest eigenvalue {eigvals[0]:.3e})")
        raise CorrelationError(f"{name} is not positive semidefinite (smallest eigenvalue {eigvals[0]:.3e}).")
    logger.warning(f"{name}: Cholesky failed, clipping {np.sum(eigvals < 0)} negative eigenvalues")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def check_correlation(corr: np.ndarray, name: str = "correlation matrix") -> np.ndarray:
    """Validate a correlation matrix: unit diagonal, entries in [-1, 1], PSD within 1e-12."""
    corr = np.asarray(corr, dtype=float)
    if not np.allclose(np.diag(corr), 1.0) or np.any(np.abs(corr) > 1.0):
        raise CorrelationError(f"{name} needs a unit diagonal and entries in [-1, 1].")
    eigvals = linalg.eigvalsh(corr)
    if eigvals[0] < -PSD_TOL:
        raise CorrelationError(f"{name} is not positive semidefinite (smallest eigenvalue {eigvals[0]:.3e}).")
    return corr
