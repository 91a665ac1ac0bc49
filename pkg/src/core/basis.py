"""
Cubic B-spline design for the regional fixed effect.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from ..utils.validation import ensure_strictly_increasing

SPLINE_ORDER = 4
_DEGREE = SPLINE_ORDER - 1


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Open uniform cubic B-spline basis on [t_1, t_M]."""
    K: int
    interior_knots: np.ndarray
    knots: np.ndarray
    order: int = SPLINE_ORDER

    @classmethod
    def from_times(cls, times, K: int) -> "SplineBasis":
        """
        Boundary knots repeated four times, K-4 equally spaced interior knots.

        Raises:
            ValueError: if M < 4, K < 4 or K > M
        """
        t = ensure_strictly_increasing(times)
        M = t.size
        if M < SPLINE_ORDER:
            raise ValueError(f"need at least {SPLINE_ORDER} timepoints, got {M}")
        if K < SPLINE_ORDER:
            raise ValueError(f"basis size K must be at least {SPLINE_ORDER}, got {K}")
        if K > M:
            raise ValueError(f"basis size K={K} exceeds M={M} timepoints (rank deficient)")

        interior = np.linspace(t[0], t[-1], K - SPLINE_ORDER + 2)[1:-1]
        knots = np.concatenate([
            np.repeat(t[0], SPLINE_ORDER), interior, np.repeat(t[-1], SPLINE_ORDER)
        ])
        return cls(K=K, interior_knots=interior, knots=knots)

    def design(self, times) -> np.ndarray:
        """M x K matrix of basis values, row m holding psi_1(t_m) .. psi_K(t_m)."""
        t = np.asarray(times, dtype=float)
        return BSpline.design_matrix(t, self.knots, _DEGREE).toarray()


def make_basis(times, K: int) -> np.ndarray:
    """Design matrix G~ for ``K`` cubic B-splines on ``times``."""
    return SplineBasis.from_times(times, K).design(times)


def ols_init(design: np.ndarray, X: np.ndarray) -> np.ndarray:
    """
    Least-squares spline coefficients for all voxels of a region.

    The design repeats for every voxel, so the fit equals the fit to the
    voxel-averaged series.

    Raises:
        ValueError: if the design is rank deficient
    """
    X = np.atleast_2d(X)
    coef, _, rank, _ = np.linalg.lstsq(design, X.mean(axis=0), rcond=None)
    if rank < design.shape[1]:
        raise ValueError(f"spline design is rank deficient (rank {rank} < {design.shape[1]})")
    return coef
