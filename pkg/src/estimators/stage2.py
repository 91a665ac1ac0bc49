"""
Inter-regional restricted maximum likelihood for a pair of regions.

In units of sigma2 the stacked pair signal has covariance

    V11 = C1 (x) B1 + J (x) A + I      V12 = rho * J (x) A
    V22 = C2 (x) B2 + J (x) A + I

with A = k_eta G(tau_eta) + nugget I and B_j = k_gamma_j H_j. The mean is
Z mu with Z the two-column region indicator. V12 has rank M, so it is kept in
factored form and all solves go through the Schur complement of V22.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog
from scipy import linalg

from .baselines import corr_of_averages, fe_correlation
from ..config.settings import KernelSettings, Stage2Settings
from ..core.errors import InfeasibleParametersError
from ..core.kernels import correlation_from_lags, spatial_distances, temporal_lags
from ..core.linalg import SchurSystem, cholesky_logdet, cholesky_with_jitter
from ..core.optimize import OptimizerOptions, OptProblem, minimize
from ..models.data import RegionData
from ..models.params import EtaCovParams, PairTheta
from ..models.results import Stage1Fit, Stage2Fit
from ..utils.monitoring import PerformanceMonitor, metrics_collector

logger = structlog.get_logger(__name__)

FIXED_MODE_PARAMS = ("tau_eta", "k_eta_ratio", "rho", "nugget_ratio")


@dataclass(eq=False)
class PairCovariance:
    """Blocks of the pair covariance; V12 = U @ T.T."""
    V11: np.ndarray
    V22: np.ndarray
    U: np.ndarray
    T: np.ndarray

    @property
    def V12(self) -> np.ndarray:
        return self.U @ self.T.T

    def dense(self) -> np.ndarray:
        V12 = self.V12
        return np.block([[self.V11, V12], [V12.T, self.V22]])

    def system(self) -> SchurSystem:
        return SchurSystem(self.V11, self.V22, self.U, self.T)


class PairModel:
    """Stacked data, design and precomputed distances for a region pair."""

    def __init__(self, coords1: np.ndarray, coords2: np.ndarray, times: np.ndarray,
                 X1: Optional[np.ndarray] = None, X2: Optional[np.ndarray] = None,
                 kernels: Optional[KernelSettings] = None, allow_duplicates: bool = False):
        kernels = kernels or KernelSettings()
        self.spatial_kernel = kernels.spatial
        self.temporal_kernel = kernels.temporal
        self.dist1 = spatial_distances(coords1, allow_duplicates=allow_duplicates)
        self.dist2 = spatial_distances(coords2, allow_duplicates=allow_duplicates)
        self.jitter1 = self._duplicate_jitter(self.dist1, allow_duplicates)
        self.jitter2 = self._duplicate_jitter(self.dist2, allow_duplicates)
        self.lags = temporal_lags(times)
        self.L1, self.L2 = self.dist1.shape[0], self.dist2.shape[0]
        self.M = self.lags.shape[0]
        self.n1, self.n2 = self.L1 * self.M, self.L2 * self.M
        self.Z = np.zeros((self.n1 + self.n2, 2))
        self.Z[:self.n1, 0] = 1.0
        self.Z[self.n1:, 1] = 1.0
        self.x: Optional[np.ndarray] = None
        if X1 is not None and X2 is not None:
            X1, X2 = np.atleast_2d(X1), np.atleast_2d(X2)
            if X1.shape != (self.L1, self.M) or X2.shape != (self.L2, self.M):
                raise ValueError("signal shapes do not match coordinates and times")
            self.x = np.concatenate([X1.ravel(), X2.ravel()])

    @staticmethod
    def _duplicate_jitter(distances: np.ndarray, allow_duplicates: bool) -> float:
        if allow_duplicates and np.any(distances + np.eye(distances.shape[0]) == 0.0):
            return 1e-8
        return 0.0

    @classmethod
    def from_regions(cls, region1: RegionData, region2: RegionData,
                     kernels: Optional[KernelSettings] = None,
                     allow_duplicates: bool = False) -> "PairModel":
        if region1.n_times != region2.n_times:
            raise ValueError(f"{region1.label} and {region2.label} have different numbers of timepoints")
        return cls(region1.coords, region2.coords, region1.times(), region1.X, region2.X,
                   kernels, allow_duplicates)

    @property
    def n_obs(self) -> int:
        return self.n1 + self.n2

    def eta_cov(self, theta: PairTheta) -> np.ndarray:
        G = correlation_from_lags(self.temporal_kernel, self.lags, theta.tau_eta)
        return theta.k_eta_ratio * G + theta.nugget_ratio * np.eye(self.M)

    def regional_block(self, distances: np.ndarray, jitter: float, phi: float, tau: float,
                       k_gamma: float) -> np.ndarray:
        """C (x) k H for one region."""
        C = correlation_from_lags(self.spatial_kernel, distances, phi, jitter)
        H = correlation_from_lags(self.temporal_kernel, self.lags, tau)
        return np.kron(C, k_gamma * H)

    def covariance(self, theta: PairTheta) -> PairCovariance:
        A = self.eta_cov(theta)
        V11 = (self.regional_block(self.dist1, self.jitter1, theta.phi_gamma_1,
                                   theta.tau_gamma_1, theta.k_gamma_ratio_1)
               + np.tile(A, (self.L1, self.L1)) + np.eye(self.n1))
        V22 = (self.regional_block(self.dist2, self.jitter2, theta.phi_gamma_2,
                                   theta.tau_gamma_2, theta.k_gamma_ratio_2)
               + np.tile(A, (self.L2, self.L2)) + np.eye(self.n2))
        U = theta.rho * np.tile(A, (self.L1, 1))
        T = np.tile(np.eye(self.M), (self.L2, 1))
        return PairCovariance(V11=V11, V22=V22, U=U, T=T)

    def _require_data(self) -> np.ndarray:
        if self.x is None:
            raise ValueError("pair model was built without signals")
        return self.x

    def _terms(self, theta: PairTheta):
        x = self._require_data()
        system = self.covariance(theta).system()
        solved = system.solve(np.column_stack([x, self.Z]))
        Vinv_x, Vinv_Z = solved[:, 0], solved[:, 1:]
        normal = self.Z.T @ Vinv_Z
        mu = np.linalg.solve(normal, self.Z.T @ Vinv_x)
        r = x - self.Z @ mu
        quad = float(r @ (Vinv_x - Vinv_Z @ mu))
        return system, normal, mu, quad

    def objective(self, theta: PairTheta) -> float:
        """Negative ReML with mu by GLS and sigma2 profiled."""
        system, normal, _, quad = self._terms(theta)
        if quad <= 0.0:
            raise InfeasibleParametersError("degenerate zero residual")
        _, logdet_normal = np.linalg.slogdet(normal)
        return (0.5 * system.logdet() + 0.5 * logdet_normal
                + 0.5 * (self.n_obs - 2) * np.log(quad))

    def gls_mu(self, theta: PairTheta) -> np.ndarray:
        return self._terms(theta)[2]

    def sigma2(self, theta: PairTheta) -> float:
        quad = self._terms(theta)[3]
        if quad <= 0.0:
            raise ValueError("degenerate zero residual: sigma2 cannot be profiled")
        return quad / (self.n_obs - 2)

    def dense_objective(self, theta: PairTheta) -> float:
        """Reference evaluation with a dense Cholesky of the full V."""
        x = self._require_data()
        V = self.covariance(theta).dense()
        chol = cholesky_with_jitter(V, name="V")
        Vinv_Z = linalg.cho_solve((chol, True), self.Z)
        Vinv_x = linalg.cho_solve((chol, True), x)
        normal = self.Z.T @ Vinv_Z
        mu = np.linalg.solve(normal, self.Z.T @ Vinv_x)
        r = x - self.Z @ mu
        quad = float(r @ linalg.cho_solve((chol, True), r))
        _, logdet_normal = np.linalg.slogdet(normal)
        return (0.5 * cholesky_logdet(chol) + 0.5 * logdet_normal
                + 0.5 * (self.n_obs - 2) * np.log(quad))


def build_pair_cov(theta: PairTheta, coords1: np.ndarray, coords2: np.ndarray,
                   times: np.ndarray, kernels: Optional[KernelSettings] = None) -> PairCovariance:
    """Covariance blocks (V11, V12, V22) of a region pair in units of sigma2."""
    return PairModel(coords1, coords2, times, kernels=kernels).covariance(theta)


def neg_reml_inter(theta: PairTheta, region1: RegionData, region2: RegionData) -> float:
    """Negative ReML of a region pair via the Schur complement."""
    return PairModel.from_regions(region1, region2).objective(theta)


def gls_mu(theta: PairTheta, region1: RegionData, region2: RegionData) -> np.ndarray:
    """GLS estimate of the two regional means."""
    return PairModel.from_regions(region1, region2).gls_mu(theta)


def profile_sigma2_inter(theta: PairTheta, region1: RegionData, region2: RegionData) -> float:
    """Profiled sigma2 = r^T V^-1 r / (M (L1 + L2) - 2)."""
    return PairModel.from_regions(region1, region2).sigma2(theta)


def ca_start(region1: RegionData, region2: RegionData) -> Optional[float]:
    """Correlation of averages of a pair, or None when either average is constant."""
    try:
        return corr_of_averages(region1.X, region2.X)
    except ValueError:
        return None


def initial_pair_theta(fit1: Stage1Fit, fit2: Stage1Fit,
                       stage2: Optional[Stage2Settings] = None,
                       ca: Optional[float] = None) -> PairTheta:
    """
    Warm start from the two Stage-1 fits.

    rho starts at the correlation of averages ``ca`` (clipped), or at the
    fixed-effect correlation when ``ca`` is not given or not finite. k_eta starts
    at the temporal variance of the difference of the fitted fixed effects
    relative to the mean Stage-1 sigma2.
    """
    stage2 = stage2 or Stage2Settings()
    if ca is not None and np.isfinite(ca):
        rho = float(ca)
    else:
        try:
            rho = fe_correlation(fit1.nu_hat, fit2.nu_hat)
        except ValueError:
            rho = 0.0
    rho = float(np.clip(rho, -stage2.rho_clip, stage2.rho_clip))

    sigma2_init = 0.5 * (fit1.sigma2_hat + fit2.sigma2_hat)
    k_eta = max(np.var(fit1.nu_hat - fit2.nu_hat) / sigma2_init, stage2.k_eta_floor)

    eta = EtaCovParams(k_eta_ratio=k_eta, tau_eta=stage2.init_tau_eta,
                       nugget_ratio=stage2.init_nugget_ratio)
    return PairTheta.from_parts(eta, fit1.theta, fit2.theta, rho)


def fit_pair(region1: RegionData, region2: RegionData, fit1: Stage1Fit, fit2: Stage1Fit,
             stage2: Optional[Stage2Settings] = None, optimizer: Optional[OptimizerOptions] = None,
             kernels: Optional[KernelSettings] = None,
             allow_duplicates: bool = False) -> Stage2Fit:
    """
    Fit the inter-regional model of a region pair.

    In ``refine`` mode all ten parameters are optimized from the Stage-1 warm
    start; in ``fixed`` mode only (tau_eta, k_eta_ratio, rho, nugget_ratio) are
    free and the regional parameters stay at their Stage-1 values.
    """
    stage2 = stage2 or Stage2Settings()
    optimizer = optimizer or OptimizerOptions()
    pair_label = f"{region1.label}-{region2.label}"

    with PerformanceMonitor("stage2_fit", metrics_collector, {"pair": pair_label}) as monitor:
        model = PairModel.from_regions(region1, region2, kernels, allow_duplicates)
        start = initial_pair_theta(fit1, fit2, stage2, ca_start(region1, region2))

        if stage2.mode == "refine":
            free = list(PairTheta.NAMES)
        else:
            free = list(FIXED_MODE_PARAMS)
        transforms = [PairTheta.TRANSFORMS[PairTheta.index(name)] for name in free]

        def to_theta(x: np.ndarray) -> PairTheta:
            return start.with_values(**{name: float(v) for name, v in zip(free, x)})

        def objective(x: np.ndarray) -> float:
            metrics_collector.record_evaluation("stage2")
            return model.objective(to_theta(x))

        problem = OptProblem(objective, transforms, free, label=f"stage2:{pair_label}")
        init = [getattr(start, name) for name in free]
        result = minimize(problem, init, optimizer)

        theta = to_theta(result.x)
        fit = Stage2Fit(
            label_1=region1.label,
            label_2=region2.label,
            theta=theta,
            mu_hat=model.gls_mu(theta),
            sigma2_hat=model.sigma2(theta),
            objective=result.fun,
            convergence=result.to_dict(),
            stage1_source="refined" if stage2.mode == "refine" else "fixed",
            rho_at_boundary=abs(theta.rho) > stage2.boundary_rho,
        )

    metrics_collector.record_fit("stage2", result.status, monitor.duration)
    logger.info("Stage 2 fit completed", pair=pair_label, mode=stage2.mode, status=result.status,
                rho=theta.rho, objective=result.fun, evaluations=result.evaluations,
                sigma2=fit.sigma2_hat)
    if fit.rho_at_boundary:
        logger.warning("Estimated correlation at the boundary", pair=pair_label, rho=theta.rho)
    if not result.converged:
        logger.warning("Stage 2 fit did not converge", pair=pair_label, status=result.status)
    return fit
