# utils/errors.py
from typing import Optional


class SignatureMORError(Exception):
    """Base class for every error raised by this project."""


class DimensionTooLargeError(SignatureMORError, ValueError):
    """The truncated tensor algebra does not fit into the integer/array range."""


class WordError(SignatureMORError, ValueError):
    """A word has a letter outside {1..d} or is longer than the truncation level."""


class TruncationError(SignatureMORError, ValueError):
    """Degree or basis order mismatch between a functional and a tensor."""


class InvariantViolationError(SignatureMORError, RuntimeError):
    """A structural invariant of an assembled object does not hold."""


class GramianInconsistencyError(SignatureMORError, RuntimeError):
    """Gramians are indefinite or PQ has large negative eigenvalues."""


class RankDeficiencyError(SignatureMORError, RuntimeError):
    """Numerical rank zero, or a requested dimension beyond the numerical rank."""


class CorrelationError(SignatureMORError, ValueError):
    """A correlation or covariance matrix is not positive semidefinite."""


class NonFiniteStateError(SignatureMORError, RuntimeError):
    """A simulated state or sample became NaN or infinite."""

    def __init__(self, message: str, path_index: Optional[int] = None):
        super().__init__(message)
        self.path_index = path_index


class ImpliedVolBoundsError(SignatureMORError, ValueError):
    """Option price outside the no-arbitrage interval (intrinsic, S0)."""

    def __init__(self, message: str, bound: str, bound_value: float):
        super().__init__(message)
        self.bound = bound
        self.bound_value = bound_value


class BracketError(SignatureMORError, RuntimeError):
    """Root solve could not bracket the implied volatility."""


class StepSizeUnderflowError(SignatureMORError, RuntimeError):
    """Adaptive ODE integration failed because the step size underflowed."""


class ConfigError(SignatureMORError, ValueError):
    """Invalid pipeline configuration."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class MissingArtifactError(SignatureMORError, FileNotFoundError):
    """An input artifact is missing; the message names the producing command."""

    def __init__(self, path: str, command: str):
        super().__init__(f"missing artifact {path}; run '{command}' first")
        self.path = path
        self.command = command


class StaleArtifactError(SignatureMORError, RuntimeError):
    """An artifact exists but was produced from a different configuration."""
