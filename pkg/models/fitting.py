# models/fitting.py
"""
Least-squares fit of a signature price model S_t ~ <l, Sig(driver)_{0,t}>.

One time-independent functional l is fitted jointly over all grid times of all
training paths. The normal equations G = sum X^T X, b = sum X^T y are
accumulated over path chunks so only one chunk of signature streams is held in
memory at a time.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from algebra.signature import signature_stream_batch
from algebra.words import BasisOrder, LinearFunctional, format_word, parse_word
from models.path_batch import PathBatch
from utils import defaults
from utils.errors import RankDeficiencyError
from utils.logger import get_logger
from utils.parallel import map_path_chunks

logger = get_logger(__name__)


@dataclass(frozen=True)
class NormalEquations:
    """Sufficient statistics of a least-squares problem."""
    G: np.ndarray
    b: np.ndarray
    yy: float
    count: int

    def __add__(self, other: "NormalEquations") -> "NormalEquations":
        return NormalEquations(self.G + other.G, self.b + other.b, self.yy + other.yy, self.count + other.count)

    def mean_squared_residual(self, coeffs: np.ndarray) -> float:
        """(l^T G l - 2 l^T b + y^T y) / count, clipped at 0."""
        value = (coeffs @ self.G @ coeffs - 2.0 * coeffs @ self.b + self.yy) / self.count
        return max(float(value), 0.0)


@dataclass(frozen=True)
class FittedSignatureModel:
    """
    Fitted signature model.

    Attributes:
        functional (LinearFunctional): l, of degree <= m.
        order (BasisOrder): Basis of the driver signature.
        ridge (float): Ridge parameter used.
        train_rmse (float): In-sample RMSE over all grid times.
        validation_rmse (float): Out-of-sample RMSE.
        target_rms (float): RMS of the validation targets, for relative errors.
        sweep (tuple): (ridge, train_rmse, validation_rmse) triples of the ridge sweep.
    """
    functional: LinearFunctional
    order: BasisOrder
    ridge: float
    train_rmse: float
    validation_rmse: float
    target_rms: float = 1.0
    sweep: tuple = field(default=())

    @property
    def relative_validation_rmse(self) -> float:
        return self.validation_rmse / self.target_rms if self.target_rms > 0 else float("nan")

    @property
    def coefficients(self) -> np.ndarray:
        return self.functional.to_vector(self.order)

    def predict(self, drivers: np.ndarray) -> np.ndarray:
        """Model prices <l, Sig_{0,t_j}> for (B, M+1, d) driver paths."""
        return signature_stream_batch(drivers, self.order) @ self.coefficients

    def save(self, path: Union[str, Path]) -> None:
        words = [format_word(w, self.order.d) for w in self.functional.terms]
        with open(path, "wb") as f:
            np.savez(
                f,
                d=self.order.d,
                m=self.order.m,
                words=np.array(words, dtype=str),
                coeffs=np.array(list(self.functional.terms.values()), dtype=float),
                ridge=self.ridge,
                train_rmse=self.train_rmse,
                validation_rmse=self.validation_rmse,
                target_rms=self.target_rms,
                sweep=np.array(self.sweep, dtype=float).reshape(-1, 3),
            )
        logger.info(f"Saved signature model ({len(words)} terms) to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FittedSignatureModel":
        with np.load(path, allow_pickle=False) as data:
            order = BasisOrder(int(data["d"]), int(data["m"]))
            terms = {parse_word(w, order.d): float(c) for w, c in zip(data["words"], data["coeffs"])}
            return cls(
                functional=LinearFunctional(terms),
                order=order,
                ridge=float(data["ridge"]),
                train_rmse=float(data["train_rmse"]),
                validation_rmse=float(data["validation_rmse"]),
                target_rms=float(data["target_rms"]),
                sweep=tuple(tuple(float(x) for x in row) for row in data["sweep"]),
            )


def accumulate_normal_equations(
    targets: np.ndarray,
    drivers: np.ndarray,
    order: BasisOrder,
    chunk: int = defaults.FIT_CHUNK,
    threads: int = 1,
) -> NormalEquations:
    """
    Normal equations of the regression of targets on signature streams.

    :param targets: (B, M+1) target values.
    :param drivers: (B, M+1, d) time-extended driver paths.
    :param order: Signature basis order.
    """
    def run(start: int, stop: int) -> NormalEquations:
        X = signature_stream_batch(drivers[start:stop], order).reshape(-1, order.n)
        y = targets[start:stop].reshape(-1)
        return NormalEquations(X.T @ X, X.T @ y, float(y @ y), y.shape[0])

    parts = map_path_chunks(run, targets.shape[0], chunk, threads, name="FitWorker")
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total


def solve_ridge(ne: NormalEquations, ridge: float) -> np.ndarray:
    """Solve (G + ridge I) l = b; ridge = 0 falls back to the minimum-norm least-squares solution."""
    if ridge < 0:
        raise ValueError(f"Ridge parameter must be nonnegative, got {ridge}.")
    if ridge > 0:
        try:
            return linalg.solve(ne.G + ridge * np.eye(ne.G.shape[0]), ne.b, assume_a="pos")
        except linalg.LinAlgError:
            logger.warning("Ridge system not positive definite; using least squares")
    coeffs, _, rank, _ = linalg.lstsq(ne.G, ne.b)
    if rank < ne.G.shape[0]:
        logger.warning(f"Normal equations are rank deficient (rank {rank} of {ne.G.shape[0]}); minimum-norm solution")
    return coeffs


def _residual_rmse(targets: np.ndarray, drivers: np.ndarray, order: BasisOrder, coeffs: np.ndarray,
                   chunk: int, threads: int) -> float:
    def run(start: int, stop: int) -> float:
        pred = signature_stream_batch(drivers[start:stop], order) @ coeffs
        return float(np.sum((targets[start:stop] - pred) ** 2))

    sse = sum(map_path_chunks(run, targets.shape[0], chunk, threads, name="FitWorker"))
    return float(np.sqrt(sse / targets.size))


def fit_signature_model(
    targets: np.ndarray,
    drivers: np.ndarray,
    m: int,
    ridge: Optional[float] = None,
    train_fraction: float = defaults.TRAIN_FRACTION,
    sweep: Sequence[float] = (),
    chunk: int = defaults.FIT_CHUNK,
    threads: int = 1,
) -> FittedSignatureModel:
    """
    Fit l minimizing sum (S_t - <l, Sig_{0,t}>)^2 + ridge |l|^2 over training paths and grid times.

    Args:
        targets (np.ndarray): (B, M+1) price paths.
        drivers (np.ndarray): (B, M+1, d) time-extended driver paths.
        m (int): Truncation level.
        ridge (float): Ridge parameter; None uses RIDGE_SCALE * mean squared training target.
        train_fraction (float): Leading share of paths used for training, the rest validates.
        sweep (Sequence[float]): Relative ridge values (times the mean squared target) to report.
        chunk (int): Paths per signature batch.
        threads (int): Worker threads.

    Returns:
        FittedSignatureModel: Functional and fit diagnostics.
    """
    targets = np.asarray(targets, dtype=float)
    drivers = np.asarray(drivers, dtype=float)
    if targets.shape != drivers.shape[:2]:
        raise ValueError(f"Targets {targets.shape} do not match drivers {drivers.shape}.")
    n_paths = targets.shape[0]
    n_train = int(np.floor(train_fraction * n_paths))
    if not 1 <= n_train < n_paths:
        raise ValueError(f"Cannot split {n_paths} paths with train fraction {train_fraction}.")
    order = BasisOrder(drivers.shape[2], m)
    logger.info(f"Fitting signature model d={order.d}, m={m}, n={order.n} on {n_train}/{n_paths - n_train} paths")

    train = accumulate_normal_equations(targets[:n_train], drivers[:n_train], order, chunk, threads)
    valid = accumulate_normal_equations(targets[n_train:], drivers[n_train:], order, chunk, threads)
    scale = train.yy / train.count
    if ridge is None:
        ridge = defaults.RIDGE_SCALE * scale

    sweep_rows = []
    for rel in sweep:
        c = solve_ridge(train, rel * scale)
        sweep_rows.append((rel * scale, np.sqrt(train.mean_squared_residual(c)), np.sqrt(valid.mean_squared_residual(c))))
        logger.debug(f"ridge {rel * scale:.3e}: validation RMSE {sweep_rows[-1][2]:.3e}")

    coeffs = solve_ridge(train, ridge)
    if not np.any(coeffs):
        raise RankDeficiencyError("Fitted functional is identically zero.")
    validation_rmse = _residual_rmse(targets[n_train:], drivers[n_train:], order, coeffs, chunk, threads)
    model = FittedSignatureModel(
        functional=LinearFunctional.from_vector(coeffs, order),
        order=order,
        ridge=float(ridge),
        train_rmse=float(np.sqrt(train.mean_squared_residual(coeffs))),
        validation_rmse=validation_rmse,
        target_rms=float(np.sqrt(valid.yy / valid.count)),
        sweep=tuple(sweep_rows),
    )
    logger.info(
        f"Fitted ridge={ridge:.3e}: train RMSE {model.train_rmse:.3e}, "
        f"validation RMSE {model.validation_rmse:.3e} ({model.relative_validation_rmse:.2e} relative)"
    )
    return model


def fit_path_batch(batch: PathBatch, m: int, **kwargs) -> FittedSignatureModel:
    """Fit on a simulated batch: prices against the time-extended driver (t, Z, W...)."""
    return fit_signature_model(batch.prices, batch.drivers, m, **kwargs)
