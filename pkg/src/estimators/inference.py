"""
Asymptotic inference for the inter-regional correlation.

The Fisher information of the restricted likelihood is

    F_ij = 1/2 tr(Pi V_i Pi V_j),  Pi = V^-1 - V^-1 Z (Z^T V^-1 Z)^-1 Z^T V^-1,

with V_i the partial derivative of V with respect to the i-th entry of
PairTheta. Pi is formed explicitly; each V_i stays in Kronecker factor form
and only one Pi V_i Pi is held at a time, so the working set is a few
(M (L1 + L2))^2 arrays.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy import linalg, stats

from ..core.errors import SingularInformationError
from ..core.kernels import correlation_from_lags, get_kernel
from ..core.linalg import cholesky_with_jitter
from ..models.params import PairTheta
from ..models.results import PairInference, Stage2Fit
from ..utils.monitoring import PerformanceMonitor, metrics_collector
from .stage2 import PairModel

logger = structlog.get_logger(__name__)

SE_MODES = ("full-inverse", "marginal")
MAX_CONDITION = 1e12
RHO_INDEX = PairTheta.index("rho")


def pi_matrix(V: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Projection V^-1 - V^-1 Z (Z^T V^-1 Z)^-1 Z^T V^-1."""
    chol = cholesky_with_jitter(V, name="V")
    Pi = linalg.cho_solve((chol, True), np.eye(V.shape[0], order="F"), overwrite_b=True)
    del chol
    Vinv_Z = Pi @ Z
    Pi -= Vinv_Z @ np.linalg.solve(Z.T @ Vinv_Z, Vinv_Z.T)
    # symmetric, so the transpose is the same matrix in C order
    return Pi.T


@dataclass(frozen=True)
class KroneckerPartial:
    """dV/dtheta_i = P (x) D on voxels [start, stop), zero elsewhere."""

    start: int
    stop: int
    P: np.ndarray
    D: np.ndarray

    def rows(self, M: int) -> slice:
        return slice(self.start * M, self.stop * M)

    def right_multiply(self, Y: np.ndarray) -> np.ndarray:
        """Y[:, rows] @ (P (x) D) for Y already restricted to the block columns."""
        n = Y.shape[0]
        T = Y.reshape(n, self.P.shape[0], self.D.shape[0]) @ self.D
        return np.matmul(self.P.T, T).reshape(n, -1)

    def inner(self, S: np.ndarray) -> float:
        """sum(S * (P (x) D)) for the square block S on the same rows."""
        Lb, M = self.P.shape[0], self.D.shape[0]
        return float(np.einsum("ambn,ab,mn->", S.reshape(Lb, M, Lb, M), self.P, self.D))

    def dense(self, n_voxels: int, M: int) -> np.ndarray:
        out = np.zeros((n_voxels * M, n_voxels * M))
        rows = self.rows(M)
        out[rows, rows] = np.kron(self.P, self.D)
        return out


def _block_pattern(L1: int, L2: int, diagonal: float, off_diagonal: float) -> np.ndarray:
    """[[d J11, o J12], [o J21, d J22]] on voxels."""
    P = np.full((L1 + L2, L1 + L2), off_diagonal)
    P[:L1, :L1] = diagonal
    P[L1:, L1:] = diagonal
    return P


def pair_partial_factors(theta: PairTheta, model: PairModel,
                         indices: Optional[Sequence[int]] = None) -> Dict[int, KroneckerPartial]:
    """Kronecker factors of dV/dtheta_i for the requested PairTheta indices."""
    indices = range(len(PairTheta.NAMES)) if indices is None else indices
    temporal = get_kernel(model.temporal_kernel)
    spatial = get_kernel(model.spatial_kernel)
    L1, L2, M = model.L1, model.L2, model.M
    n_voxels = L1 + L2

    G = temporal.value(model.lags, theta.tau_eta)
    shared_pattern = _block_pattern(L1, L2, 1.0, theta.rho)

    regional = {
        1: (0, L1, model.dist1, model.jitter1,
            theta.phi_gamma_1, theta.tau_gamma_1, theta.k_gamma_ratio_1),
        2: (L1, n_voxels, model.dist2, model.jitter2,
            theta.phi_gamma_2, theta.tau_gamma_2, theta.k_gamma_ratio_2),
    }

    factors = {}
    for i in indices:
        name = PairTheta.NAMES[i]
        if name == "tau_eta":
            dA = theta.k_eta_ratio * temporal.partial(model.lags, theta.tau_eta)
            factors[i] = KroneckerPartial(0, n_voxels, shared_pattern, dA)
        elif name == "k_eta_ratio":
            factors[i] = KroneckerPartial(0, n_voxels, shared_pattern, G)
        elif name == "nugget_ratio":
            factors[i] = KroneckerPartial(0, n_voxels, shared_pattern, np.eye(M))
        elif name == "rho":
            A = theta.k_eta_ratio * G + theta.nugget_ratio * np.eye(M)
            factors[i] = KroneckerPartial(0, n_voxels, _block_pattern(L1, L2, 0.0, 1.0), A)
        else:
            start, stop, distances, jitter, phi, tau, k_gamma = regional[int(name[-1])]
            C = correlation_from_lags(spatial, distances, phi, jitter)
            H = temporal.value(model.lags, tau)
            if name.startswith("phi_gamma"):
                dC, dB = spatial.partial(distances, phi), k_gamma * H
            elif name.startswith("tau_gamma"):
                dC, dB = C, k_gamma * temporal.partial(model.lags, tau)
            else:
                dC, dB = C, H
            factors[i] = KroneckerPartial(start, stop, dC, dB)
    return factors


def pair_partials(theta: PairTheta, model: PairModel,
                  indices: Optional[Sequence[int]] = None) -> dict:
    """Dense dV/dtheta_i for the requested PairTheta indices (all ten by default)."""
    n_voxels = model.L1 + model.L2
    return {i: factor.dense(n_voxels, model.M)
            for i, factor in pair_partial_factors(theta, model, indices).items()}


def dV_dtheta(theta: PairTheta, index: Union[int, str], coords1: np.ndarray,
              coords2: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Partial derivative of the full pair covariance with respect to one parameter."""
    i = PairTheta.index(index) if isinstance(index, str) else int(index)
    model = PairModel(coords1, coords2, times)
    return pair_partials(theta, model, [i])[i]


def fisher_from_model(theta: PairTheta, model: PairModel) -> np.ndarray:
    """Fisher information of the restricted likelihood at ``theta``."""
    Pi = pi_matrix(model.covariance(theta).dense(), model.Z)
    factors = pair_partial_factors(theta, model)
    M = model.M
    n = len(PairTheta.NAMES)
    F = np.empty((n, n))
    for i in range(n):
        rows_i = factors[i].rows(M)
        # tr(Pi V_i Pi V_j) = sum((Pi V_i Pi) * V_j) with V_j symmetric
        S = factors[i].right_multiply(Pi[:, rows_i]) @ Pi[rows_i, :]
        for j in range(i, n):
            rows_j = factors[j].rows(M)
            F[i, j] = F[j, i] = 0.5 * factors[j].inner(S[rows_j, rows_j])
        del S
    return F


def fisher_info(theta: PairTheta, coords1: np.ndarray, coords2: np.ndarray,
                times: np.ndarray) -> np.ndarray:
    """10 x 10 Fisher information in PairTheta order."""
    return fisher_from_model(theta, PairModel(coords1, coords2, times))


def rho_se(fisher: np.ndarray, mode: str = "full-inverse") -> float:
    """
    Standard error of rho_hat.

    ``marginal`` inverts only the (rho, rho) entry; ``full-inverse`` takes the
    (rho, rho) entry of the inverse information, accounting for the other nine
    co-estimated parameters.

    Raises:
        SingularInformationError: if the required information is not invertible
    """
    if mode not in SE_MODES:
        raise ValueError(f"Unknown se mode '{mode}', expected one of {SE_MODES}")
    F = 0.5 * (fisher + fisher.T)
    if mode == "marginal":
        info = F[RHO_INDEX, RHO_INDEX]
        if not info > 0:
            raise SingularInformationError("information for rho is not positive")
        return float(1.0 / np.sqrt(info))

    condition = np.linalg.cond(F)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularInformationError(f"Fisher information is numerically singular (condition {condition:.3e})")
    variance = np.linalg.inv(F)[RHO_INDEX, RHO_INDEX]
    if not variance > 0:
        raise SingularInformationError("inverse information has a non-positive rho entry")
    return float(np.sqrt(variance))


def fisher_z_ci(rho_hat: float, se_rho: float, alpha: float = 0.05) -> Tuple[float, float]:
    """tanh(arctanh(rho_hat) -/+ z_{1-alpha/2} se_rho / (1 - rho_hat^2))."""
    if not -1.0 < rho_hat < 1.0:
        raise ValueError("rho_hat must lie in (-1, 1)")
    se_z = se_rho / (1.0 - rho_hat ** 2)
    half_width = stats.norm.ppf(1.0 - alpha / 2.0) * se_z
    centre = np.arctanh(rho_hat)
    return float(np.tanh(centre - half_width)), float(np.tanh(centre + half_width))


def z_and_p(rho_hat: float, se_rho: float) -> Tuple[float, float]:
    """z-score of arctanh(rho_hat) and its two-sided normal p-value."""
    if se_rho <= 0:
        raise ValueError("se_rho must be positive")
    z = float(np.arctanh(rho_hat) * (1.0 - rho_hat ** 2) / se_rho)
    return z, float(2.0 * stats.norm.sf(abs(z)))


def infer_pair(fit: Stage2Fit, model: PairModel, alpha: float = 0.05,
               se_mode: str = "full-inverse") -> PairInference:
    """Standard error, interval, z-score and p-value for a fitted pair."""
    with PerformanceMonitor("inference", metrics_collector,
                            {"pair": f"{fit.label_1}-{fit.label_2}"}) as monitor:
        fisher = fisher_from_model(fit.theta, model)
        se = rho_se(fisher, se_mode)
        lower, upper = fisher_z_ci(fit.rho_hat, se, alpha)
        z, p = z_and_p(fit.rho_hat, se)
        inference = PairInference(
            se_rho=se,
            se_z=se / (1.0 - fit.rho_hat ** 2),
            z_score=z,
            p_value=p,
            ci_lower=lower,
            ci_upper=upper,
            alpha=alpha,
            mode=se_mode,
        )
    metrics_collector.record_fit("inference", "ok", monitor.duration)
    logger.debug("Inference completed", pair=f"{fit.label_1}-{fit.label_2}", se=se, p=p)
    return inference
