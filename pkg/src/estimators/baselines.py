"""
Correlation-of-averages baselines and their attenuation diagnostics.
"""

from typing import Optional

import numpy as np
from scipy import stats

from ..core.kernels import build_spatial_corr
from ..models.params import CALimitInputs, PairTheta


def _pearson(a: np.ndarray, b: np.ndarray, what: str) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"{what}: series must be 1-D with equal length")
    if a.size < 3:
        raise ValueError(f"{what}: at least 3 timepoints are required")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise ValueError(f"{what}: zero-variance series")
    r = stats.pearsonr(a, b)[0]
    return float(np.clip(r, -1.0, 1.0))


def corr_of_averages(X1: np.ndarray, X2: np.ndarray) -> float:
    """Pearson correlation of the voxel-averaged series of two regions (L x M each)."""
    return _pearson(np.atleast_2d(X1).mean(axis=0), np.atleast_2d(X2).mean(axis=0),
                    "correlation of averages")


def fe_correlation(nu_hat_1: np.ndarray, nu_hat_2: np.ndarray) -> float:
    """Pearson correlation of the Stage-1 fitted fixed effects."""
    return _pearson(nu_hat_1, nu_hat_2, "fixed-effect correlation")


def ca_limit(inputs: CALimitInputs, rho_star: Optional[float] = None) -> float:
    """
    Limiting correlation of regional averages: rho* / sqrt((a1 + b1)(a2 + b2)).

    Args:
        inputs: Average intra-regional correlations and noise-to-signal ratios
        rho_star: Voxel-level correlation; defaults to ``inputs.rho_star``
    """
    rho = inputs.rho_star if rho_star is None else rho_star
    denominator = (inputs.alpha_1 + inputs.beta_1) * (inputs.alpha_2 + inputs.beta_2)
    if denominator <= 0:
        raise ValueError("ca_limit denominator must be positive")
    return float(rho / np.sqrt(denominator))


def _shared_variance(theta: PairTheta) -> float:
    return theta.k_eta_ratio + theta.nugget_ratio


def model_ca_inputs(theta: PairTheta, coords1: np.ndarray, coords2: np.ndarray) -> CALimitInputs:
    """
    CALimitInputs implied by the mixed model at lag 0.

    The voxel signal variance (in units of sigma2) is xi2_j = k_eta + nugget + k_gamma_j;
    alpha_j is the average pairwise voxel correlation (diagonal included) and
    beta_j = 1 / (L_j xi2_j).
    """
    shared = _shared_variance(theta)
    values = {}
    for which, coords in ((1, coords1), (2, coords2)):
        region = theta.region(which)
        C = build_spatial_corr(coords, region.phi_gamma)
        xi2 = shared + region.k_gamma_ratio
        if xi2 <= 0:
            raise ValueError("voxel signal variance is zero")
        values[which] = {
            "alpha": (shared + region.k_gamma_ratio * float(C.mean())) / xi2,
            "beta": 1.0 / (C.shape[0] * xi2),
            "xi2": xi2,
        }
    rho_star = theta.rho * shared / np.sqrt(values[1]["xi2"] * values[2]["xi2"])
    return CALimitInputs(
        rho_star=float(rho_star),
        alpha_1=values[1]["alpha"], alpha_2=values[2]["alpha"],
        beta_1=values[1]["beta"], beta_2=values[2]["beta"],
        xi2_1=values[1]["xi2"], xi2_2=values[2]["xi2"],
    )


def spatial_noise_effect(theta: PairTheta, coords1: np.ndarray, coords2: np.ndarray) -> float:
    """
    Attenuation of the correlation of averages caused by the idiosyncratic spatial field.

    Returns the factor xi with lim CA = rho * xi when measurement noise is ignored;
    pi_j is the mean entry of C_j.
    """
    shared = _shared_variance(theta)
    if shared <= 0:
        return 0.0
    factor = 1.0
    for which, coords in ((1, coords1), (2, coords2)):
        region = theta.region(which)
        pi = float(build_spatial_corr(coords, region.phi_gamma).mean())
        factor *= 1.0 + region.k_gamma_ratio * pi / shared
    return float(factor ** -0.5)


def ca_p_value(r: float, n_times: int) -> float:
    """Two-sided p-value of H0: correlation 0 by Fisher z with SE 1/sqrt(M - 3)."""
    if n_times <= 3:
        raise ValueError("at least 4 timepoints are required")
    z = np.arctanh(np.clip(r, -1 + 1e-15, 1 - 1e-15)) * np.sqrt(n_times - 3)
    return float(2.0 * stats.norm.sf(abs(z)))
