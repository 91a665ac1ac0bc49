"""
Stationary correlation kernels for voxconn.

Temporal correlations use the squared exponential (RBF) kernel and spatial
correlations the Matern-5/2 kernel. Each kernel exposes its value and the
analytic derivative with respect to its rate parameter.
"""

from abc import ABC, abstractmethod
from typing import Dict

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ..models.params import EtaCovParams
from ..utils.validation import ensure_finite, ensure_nonnegative, ensure_positive, ensure_strictly_increasing

SQRT5 = np.sqrt(5.0)
DUPLICATE_JITTER = 1e-8


class StationaryKernel(ABC):
    """Correlation kernel depending on a non-negative lag and a positive rate."""

    name: str = ""

    @abstractmethod
    def value(self, r: np.ndarray, rate: float) -> np.ndarray:
        """Kernel value at lags ``r``; no input checks."""

    @abstractmethod
    def partial(self, r: np.ndarray, rate: float) -> np.ndarray:
        """Derivative of the kernel value with respect to ``rate``."""


class RBFKernel(StationaryKernel):
    """exp(-tau^2 u^2 / 2)."""

    name = "rbf"

    def value(self, r, rate):
        return np.exp(-0.5 * (rate * r) ** 2)

    def partial(self, r, rate):
        return -rate * r ** 2 * self.value(r, rate)


class Matern52Kernel(StationaryKernel):
    """(1 + s + s^2/3) exp(-s) with s = sqrt(5) phi d."""

    name = "matern52"

    def value(self, r, rate):
        s = SQRT5 * rate * r
        return (1.0 + s + s ** 2 / 3.0) * np.exp(-s)

    def partial(self, r, rate):
        s = SQRT5 * rate * r
        return -(5.0 / 3.0) * rate * r ** 2 * (1.0 + s) * np.exp(-s)


KERNELS: Dict[str, StationaryKernel] = {
    RBFKernel.name: RBFKernel(),
    Matern52Kernel.name: Matern52Kernel(),
}


def get_kernel(kernel) -> StationaryKernel:
    """Resolve a kernel instance or registered name."""
    if isinstance(kernel, StationaryKernel):
        return kernel
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValueError(f"Unknown kernel '{kernel}', expected one of {sorted(KERNELS)}") from None


def _check_arguments(r, rate, rate_name: str):
    r = ensure_nonnegative("lag", r)
    ensure_positive(rate_name, rate)
    return r, float(rate)


def _scalar_or_array(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


def rbf(u, tau):
    """RBF correlation at lag(s) ``u``."""
    u, tau = _check_arguments(u, tau, "tau")
    return _scalar_or_array(KERNELS["rbf"].value(u, tau))


def matern52(d, phi):
    """Matern-5/2 correlation at distance(s) ``d``."""
    d, phi = _check_arguments(d, phi, "phi")
    return _scalar_or_array(KERNELS["matern52"].value(d, phi))


def kernel_partials(kernel, rate: float, lags) -> np.ndarray:
    """
    Analytic derivative of kernel values with respect to the rate.

    Args:
        kernel: Kernel name or instance
        rate: Kernel rate (tau or phi)
        lags: Lags or distances, any shape

    Returns:
        Array of the same shape as ``lags``
    """
    lags, rate = _check_arguments(lags, rate, "rate")
    return _scalar_or_array(get_kernel(kernel).partial(lags, rate))


def temporal_lags(times) -> np.ndarray:
    """Matrix of absolute time differences."""
    t = ensure_strictly_increasing(times)
    return np.abs(t[:, None] - t[None, :])


def spatial_distances(coords, allow_duplicates: bool = False) -> np.ndarray:
    """
    Euclidean distance matrix between voxels.

    Raises:
        ValueError: when two voxels share coordinates and duplicates are not allowed
    """
    coords = ensure_finite("coords", coords)
    if coords.ndim != 2:
        raise ValueError("coords must be an L x dim array")
    if coords.shape[0] == 1:
        return np.zeros((1, 1))
    condensed = pdist(coords)
    if not allow_duplicates and np.any(condensed == 0.0):
        raise ValueError("duplicate voxel coordinates; pass allow_duplicates to add diagonal jitter")
    return squareform(condensed)


def correlation_from_lags(kernel, lags: np.ndarray, rate: float, jitter: float = 0.0) -> np.ndarray:
    """Correlation matrix from a precomputed lag/distance matrix."""
    C = get_kernel(kernel).value(lags, rate)
    if jitter:
        C = C + jitter * np.eye(C.shape[0])
    return C


def build_temporal_corr(times, tau: float, kernel="rbf") -> np.ndarray:
    """M x M temporal correlation matrix."""
    ensure_positive("tau", tau)
    return correlation_from_lags(kernel, temporal_lags(times), tau)


def build_eta_cov(times, params: EtaCovParams, kernel="rbf") -> np.ndarray:
    """Shared-signal covariance (in units of sigma2): k_eta * G + nugget * I."""
    G = build_temporal_corr(times, params.tau_eta, kernel)
    return params.k_eta_ratio * G + params.nugget_ratio * np.eye(G.shape[0])


def build_spatial_corr(coords, phi: float, kernel="matern52",
                       allow_duplicates: bool = False) -> np.ndarray:
    """
    L x L spatial correlation matrix.

    Duplicate coordinates are rejected unless ``allow_duplicates`` is set, in
    which case a 1e-8 diagonal jitter keeps the matrix non-singular.
    """
    ensure_positive("phi", phi)
    distances = spatial_distances(coords, allow_duplicates=allow_duplicates)
    has_duplicates = allow_duplicates and np.any(distances + np.eye(distances.shape[0]) == 0.0)
    return correlation_from_lags(kernel, distances, phi, DUPLICATE_JITTER if has_duplicates else 0.0)
