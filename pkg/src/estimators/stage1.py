"""
Intra-regional restricted maximum likelihood.

Model for region j in units of sigma2:

    vec(X_j) ~ N((1_L (x) G~) v_j, sigma2 * (C_j (x) k_gamma H_j + I))

The spline coefficients v_j are re-solved by GLS inside every objective
evaluation and sigma2 is profiled out, so the optimizer only sees
(phi_gamma, k_gamma_ratio, tau_gamma). Additive constants of the Gaussian
log-likelihood are dropped; objective values are comparable within a fit only.
"""

from typing import Optional

import numpy as np
import structlog
from scipy import linalg

from ..config.settings import KernelSettings, Stage1Settings
from ..core.basis import make_basis, ols_init
from ..core.errors import InfeasibleParametersError
from ..core.kernels import correlation_from_lags, spatial_distances, temporal_lags
from ..core.linalg import KroneckerSystem, cholesky_logdet, cholesky_with_jitter
from ..core.optimize import OptimizerOptions, OptProblem, minimize
from ..models.data import RegionData
from ..models.params import RegionTheta
from ..models.results import Stage1Fit
from ..utils.monitoring import PerformanceMonitor, metrics_collector

logger = structlog.get_logger(__name__)


class RegionModel:
    """Precomputed distances, lags and design for one region."""

    def __init__(self, X: np.ndarray, design: np.ndarray, coords: np.ndarray, times: np.ndarray,
                 kernels: Optional[KernelSettings] = None, allow_duplicates: bool = False):
        kernels = kernels or KernelSettings()
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.design = np.asarray(design, dtype=float)
        self.L, self.M = self.X.shape
        self.K = self.design.shape[1]
        if self.design.shape[0] != self.M:
            raise ValueError(f"design has {self.design.shape[0]} rows, signals have M={self.M}")
        if self.L * self.M <= self.K:
            raise ValueError("not enough observations for the spline basis")
        self.distances = spatial_distances(coords, allow_duplicates=allow_duplicates)
        if self.distances.shape[0] != self.L:
            raise ValueError("one coordinate row per voxel is required")
        self.lags = temporal_lags(times)
        self.jitter = 1e-8 if allow_duplicates and np.any(
            self.distances + np.eye(self.L) == 0.0) else 0.0
        self.spatial_kernel = kernels.spatial
        self.temporal_kernel = kernels.temporal

    @property
    def n_obs(self) -> int:
        return self.L * self.M

    def correlations(self, theta: RegionTheta):
        C = correlation_from_lags(self.spatial_kernel, self.distances, theta.phi_gamma, self.jitter)
        H = correlation_from_lags(self.temporal_kernel, self.lags, theta.tau_gamma)
        return C, H

    def system(self, theta: RegionTheta) -> KroneckerSystem:
        C, H = self.correlations(theta)
        return KroneckerSystem(C, H, scale=theta.k_gamma_ratio)

    def dense_covariance(self, theta: RegionTheta) -> np.ndarray:
        """V_j = C (x) k H + I as a dense (LM)^2 matrix."""
        C, H = self.correlations(theta)
        return np.kron(C, theta.k_gamma_ratio * H) + np.eye(self.n_obs)

    def full_design(self) -> np.ndarray:
        return np.kron(np.ones((self.L, 1)), self.design)

    def _fast_terms(self, theta: RegionTheta, v_fixed: Optional[np.ndarray] = None):
        system = self.system(theta)
        pieces = system.gls_pieces(self.design, self.X)
        factor = cholesky_with_jitter(pieces.normal_matrix, name="G^T V^-1 G")
        if v_fixed is None:
            v = linalg.cho_solve((factor, True), pieces.normal_rhs)
        else:
            v = np.asarray(v_fixed, dtype=float)
        residual = pieces.rotated_data - np.outer(pieces.rotated_ones, pieces.rotated_design @ v)
        quad = float(np.sum(residual ** 2 / system.D))
        return system, factor, v, quad

    def objective(self, theta: RegionTheta, restricted: bool = True,
                  v_fixed: Optional[np.ndarray] = None) -> float:
        """Negative (restricted) log-likelihood with sigma2 profiled."""
        system, factor, _, quad = self._fast_terms(theta, v_fixed)
        if quad <= 0.0:
            raise InfeasibleParametersError("degenerate zero residual")
        if not restricted:
            return 0.5 * system.logdet() + 0.5 * self.n_obs * np.log(quad)
        return (0.5 * system.logdet() + 0.5 * cholesky_logdet(factor)
                + 0.5 * (self.n_obs - self.K) * np.log(quad))

    def gls(self, theta: RegionTheta) -> np.ndarray:
        return self._fast_terms(theta)[2]

    def sigma2(self, theta: RegionTheta, v_fixed: Optional[np.ndarray] = None) -> float:
        quad = self._fast_terms(theta, v_fixed)[3]
        if quad <= 0.0:
            raise ValueError("degenerate zero residual: sigma2 cannot be profiled")
        return quad / (self.n_obs - self.K)

    def dense_objective(self, theta: RegionTheta) -> float:
        """Reference evaluation with a dense Cholesky of V_j."""
        V = self.dense_covariance(theta)
        G = self.full_design()
        x = self.X.ravel()
        chol = cholesky_with_jitter(V, name="V_j")
        Vinv_G = linalg.cho_solve((chol, True), G)
        Vinv_x = linalg.cho_solve((chol, True), x)
        normal = G.T @ Vinv_G
        v = np.linalg.solve(normal, G.T @ Vinv_x)
        r = x - G @ v
        quad = float(r @ linalg.cho_solve((chol, True), r))
        _, logdet_normal = np.linalg.slogdet(normal)
        return (0.5 * cholesky_logdet(chol) + 0.5 * logdet_normal
                + 0.5 * (self.n_obs - self.K) * np.log(quad))


def neg_reml_intra_dense(theta: RegionTheta, X: np.ndarray, design: np.ndarray,
                         coords: np.ndarray, times: np.ndarray) -> float:
    """Negative ReML of one region by dense linear algebra (small instances only)."""
    return RegionModel(X, design, coords, times).dense_objective(theta)


def neg_reml_intra_fast(theta: RegionTheta, X: np.ndarray, design: np.ndarray,
                        coords: np.ndarray, times: np.ndarray) -> float:
    """Negative ReML of one region through the Kronecker eigenbasis."""
    return RegionModel(X, design, coords, times).objective(theta)


def gls_v(theta: RegionTheta, X: np.ndarray, design: np.ndarray,
          coords: np.ndarray, times: np.ndarray) -> np.ndarray:
    """GLS spline coefficients (G^T V^-1 G)^-1 G^T V^-1 x."""
    return RegionModel(X, design, coords, times).gls(theta)


def profile_sigma2_intra(theta: RegionTheta, X: np.ndarray, design: np.ndarray,
                         coords: np.ndarray, times: np.ndarray) -> float:
    """Profiled sigma2 = r^T V^-1 r / (L M - K)."""
    return RegionModel(X, design, coords, times).sigma2(theta)


def fit_region(region: RegionData, stage1: Optional[Stage1Settings] = None,
               optimizer: Optional[OptimizerOptions] = None,
               kernels: Optional[KernelSettings] = None) -> Stage1Fit:
    """
    Fit the intra-regional model of one region.

    Args:
        region: Region signals and coordinates
        stage1: Basis size, initial values and fixed-effect handling
        optimizer: Optimizer controls
        kernels: Kernel families

    Returns:
        Stage-1 fit; a non-converged fit carries the best point found and its status
    """
    stage1 = stage1 or Stage1Settings()
    optimizer = optimizer or OptimizerOptions()

    with PerformanceMonitor("stage1_fit", metrics_collector, {"region": region.label}) as monitor:
        times = region.times()
        if stage1.n_basis >= region.n_times:
            raise ValueError(f"{region.label}: basis size K={stage1.n_basis} must be below M={region.n_times}")
        design = make_basis(times, stage1.n_basis)
        model = RegionModel(region.X, design, region.coords, times, kernels,
                            allow_duplicates=stage1.allow_duplicate_voxels)
        v_fixed = ols_init(design, region.X) if stage1.fix_fixed_effects else None

        def objective(x: np.ndarray) -> float:
            metrics_collector.record_evaluation("stage1")
            return model.objective(RegionTheta.from_vector(x), stage1.restricted, v_fixed)

        init = RegionTheta(
            phi_gamma=stage1.init_phi_gamma,
            k_gamma_ratio=stage1.init_k_gamma_ratio,
            tau_gamma=stage1.init_tau_gamma,
        )
        problem = OptProblem(objective, ("log", "log", "log"), RegionTheta.NAMES,
                             label=f"stage1:{region.label}")
        result = minimize(problem, init.to_vector(), optimizer)

        theta = RegionTheta.from_vector(result.x)
        v_hat = v_fixed if v_fixed is not None else model.gls(theta)
        fit = Stage1Fit(
            label=region.label,
            theta=theta,
            v_hat=v_hat,
            sigma2_hat=model.sigma2(theta, v_fixed),
            nu_hat=design @ v_hat,
            objective=result.fun,
            convergence=result.to_dict(),
            fixed_effects="fixed" if v_fixed is not None else "profiled",
        )

    metrics_collector.record_fit("stage1", result.status, monitor.duration)
    logger.info("Stage 1 fit completed", region=region.label, status=result.status,
                objective=result.fun, evaluations=result.evaluations,
                phi_gamma=theta.phi_gamma, k_gamma_ratio=theta.k_gamma_ratio,
                tau_gamma=theta.tau_gamma, sigma2=fit.sigma2_hat)
    if not result.converged:
        logger.warning("Stage 1 fit did not converge", region=region.label, status=result.status)
    return fit
