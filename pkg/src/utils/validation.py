"""
Validation utility for voxconn.
Input checks for scalars, arrays, time grids and whole datasets.
"""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np
import structlog

if TYPE_CHECKING:
    from ..models.data import RegionData

logger = structlog.get_logger(__name__)


def ensure_finite(name: str, value) -> np.ndarray:
    """Return ``value`` as a float array, rejecting NaN and infinities."""
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def ensure_positive(name: str, value) -> np.ndarray:
    arr = ensure_finite(name, value)
    if np.any(arr <= 0):
        raise ValueError(f"{name} must be positive, got {value}")
    return arr


def ensure_nonnegative(name: str, value) -> np.ndarray:
    arr = ensure_finite(name, value)
    if np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative, got {value}")
    return arr


def ensure_strictly_increasing(times) -> np.ndarray:
    """Validate a 1-D time grid."""
    t = ensure_finite("times", times)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("times must be a non-empty 1-D sequence")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing (duplicate or unsorted timepoints)")
    return t


def ensure_correlation_matrix(name: str, matrix, tol: float = 1e-10) -> np.ndarray:
    """Symmetric, unit diagonal and positive definite."""
    R = ensure_finite(name, matrix)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(R, R.T, atol=tol):
        raise ValueError(f"{name} must be symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=tol):
        raise ValueError(f"{name} must have unit diagonal")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None
    return R


@dataclass
class ValidationCriteria:
    """Criteria for dataset validation."""
    min_timepoints: int = 4
    min_voxels: int = 1
    n_basis: Optional[int] = None
    min_regions: int = 1


@dataclass
class ValidationResult:
    """Outcome of a dataset validation."""
    is_valid: bool = True
    issues: List[str] = field(default_factory=list)

    def add(self, issue: str) -> None:
        self.issues.append(issue)
        self.is_valid = False


class DatasetValidator:
    """Validator for lists of regions before fitting."""

    def __init__(self, criteria: Optional[ValidationCriteria] = None):
        self.criteria = criteria or ValidationCriteria()

    def validate(self, regions: Sequence["RegionData"]) -> ValidationResult:
        """
        Check region count, shared M, basis size and finiteness.

        Args:
            regions: Regions to check

        Returns:
            Validation result listing every issue found
        """
        result = ValidationResult()
        c = self.criteria

        if len(regions) < c.min_regions:
            result.add(f"need at least {c.min_regions} regions, got {len(regions)}")

        labels = [r.label for r in regions]
        if len(set(labels)) != len(labels):
            result.add("region labels must be unique")

        n_times = {r.n_times for r in regions}
        if len(n_times) > 1:
            result.add(f"regions disagree on the number of timepoints: {sorted(n_times)}")

        for region in regions:
            if region.n_times < c.min_timepoints:
                result.add(f"{region.label}: {region.n_times} timepoints, need {c.min_timepoints}")
            if region.n_voxels < c.min_voxels:
                result.add(f"{region.label}: {region.n_voxels} voxels, need {c.min_voxels}")
            if c.n_basis is not None and c.n_basis >= region.n_times:
                result.add(f"{region.label}: basis size {c.n_basis} must be below M={region.n_times}")
            if not np.all(np.isfinite(region.X)):
                result.add(f"{region.label}: signals contain non-finite values")

        if not result.is_valid:
            logger.warning("Dataset validation failed", issues=result.issues)
        return result
