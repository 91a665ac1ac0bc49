"""Exception hierarchy for voxconn."""

from typing import Optional


class VoxconnError(Exception):
    """Base class for all library errors."""


class CovarianceError(VoxconnError):
    """A covariance matrix is not positive definite, even after jitter."""

    def __init__(self, message: str, min_eigenvalue: Optional[float] = None):
        if min_eigenvalue is not None:
            message = f"{message} (min eigenvalue {min_eigenvalue:.3e})"
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InfeasibleParametersError(VoxconnError):
    """The objective cannot be evaluated at the requested parameters."""


class SingularInformationError(VoxconnError):
    """Fisher information is numerically singular."""


class DatasetFormatError(VoxconnError, ValueError):
    """A dataset file is malformed."""

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line
