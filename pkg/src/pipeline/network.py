"""
Network pipeline for voxconn.
Orchestrates Stage-1, Stage-2 and inference over all region pairs, applies
FDR control and summarizes the selected network.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..config.settings import RunConfig
from ..core.errors import SingularInformationError, VoxconnError
from ..core.optimize import OptimizerOptions
from ..estimators.baselines import ca_p_value, corr_of_averages, fe_correlation, spatial_noise_effect
from ..estimators.inference import infer_pair
from ..estimators.stage1 import fit_region
from ..estimators.stage2 import PairModel, fit_pair
from ..models.data import RegionData
from ..models.results import NetworkResult, PairEstimate, Stage1Fit
from ..utils.monitoring import PerformanceMonitor, metrics_collector
from ..utils.validation import DatasetValidator, ValidationCriteria

logger = structlog.get_logger(__name__)

FDR_METHODS = ("by", "bh")
PAIR_ERRORS = (VoxconnError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def by_threshold(p_values: Sequence[float], q: float, method: str = "by") -> List[int]:
    """
    Step-up FDR selection.

    Rejects the k* smallest p-values, k* = max{k : p_(k) <= k q / (m c(m))}, with
    c(m) = sum_{i<=m} 1/i for Benjamini-Yekutieli and c(m) = 1 for Benjamini-Hochberg.

    Returns:
        Sorted indices into ``p_values`` of the rejected hypotheses
    """
    if method not in FDR_METHODS:
        raise ValueError(f"Unknown FDR method '{method}', expected one of {FDR_METHODS}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    p = np.asarray(p_values, dtype=float)
    m = p.size
    if m == 0:
        return []
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")

    c_m = float(np.sum(1.0 / np.arange(1, m + 1))) if method == "by" else 1.0
    order = np.argsort(p, kind="stable")
    thresholds = np.arange(1, m + 1) * q / (m * c_m)
    passing = np.nonzero(p[order] <= thresholds)[0]
    if passing.size == 0:
        return []
    k_star = passing[-1] + 1
    return sorted(int(i) for i in order[:k_star])


def summarize(network: NetworkResult) -> Tuple[np.ndarray, np.ndarray]:
    """Node degree and mean selected-edge correlation (0 for isolated nodes) per region."""
    degree = np.zeros(network.J, dtype=int)
    strength = np.zeros(network.J)
    for pair in network.selected_edges():
        for node in (pair.j, pair.k):
            degree[node] += 1
            strength[node] += pair.rho_hat
    fcs = np.divide(strength, degree, out=np.zeros(network.J), where=degree > 0)
    return degree, fcs


def _select(pairs: List[PairEstimate], attribute: str, q: float, method: str) -> List[int]:
    """Positions in ``pairs`` selected by FDR on the finite values of ``attribute``."""
    candidates = [i for i, p in enumerate(pairs) if np.isfinite(getattr(p, attribute))]
    chosen = by_threshold([getattr(pairs[i], attribute) for i in candidates], q, method)
    return [candidates[i] for i in chosen]


def compare_networks(network: NetworkResult) -> Dict[str, object]:
    """Edges found by the mixed-model network, the correlation-of-averages network, or both."""
    def edge(p: PairEstimate) -> List[str]:
        return [p.label_1, p.label_2]

    return {
        "both": [edge(p) for p in network.pairs if p.selected and p.ca_selected],
        "reml_only": [edge(p) for p in network.pairs if p.selected and not p.ca_selected],
        "ca_only": [edge(p) for p in network.pairs if p.ca_selected and not p.selected],
        "reml_edges": sum(p.selected for p in network.pairs),
        "ca_edges": sum(p.ca_selected for p in network.pairs),
    }


class NetworkPipeline:
    """Fits every region pair of a dataset and builds the FDR-selected network."""

    def __init__(self, fdr_method: str = "by"):
        if fdr_method not in FDR_METHODS:
            raise ValueError(f"Unknown FDR method '{fdr_method}'")
        self.fdr_method = fdr_method
        self.metrics = metrics_collector

    def create_result(self, regions: Sequence[RegionData], config: RunConfig) -> NetworkResult:
        labels = [r.label for r in regions]
        pairs = [
            PairEstimate(j=j, k=k, label_1=labels[j], label_2=labels[k],
                         alpha=config.inference.alpha, se_mode=config.inference.se_mode)
            for j, k in combinations(range(len(regions)), 2)
        ]
        result = NetworkResult(labels=labels, pairs=pairs, q=config.network.q)
        result.status = "initialized"
        return result

    def validate(self, regions: Sequence[RegionData], config: RunConfig) -> None:
        criteria = ValidationCriteria(n_basis=config.stage1.n_basis, min_regions=2)
        report = DatasetValidator(criteria).validate(regions)
        if not report.is_valid:
            raise ValueError("invalid dataset: " + "; ".join(report.issues))

    def fit_regions(self, regions: Sequence[RegionData], result: NetworkResult,
                    config: RunConfig) -> Dict[int, Stage1Fit]:
        """Stage 1 once per region; failed regions are reported and left out."""
        optimizer = OptimizerOptions.from_settings(config.optimizer)

        def job(region: RegionData):
            try:
                return fit_region(region, config.stage1, optimizer, config.kernels), None
            except PAIR_ERRORS as e:
                return None, f"{region.label}: {e}"

        with PerformanceMonitor("fit_regions", self.metrics):
            logger.info("Fitting regions", regions=len(regions), workers=config.workers)
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                outcomes = list(executor.map(job, regions))

        fits = {}
        for index, (fit, error) in enumerate(outcomes):
            if fit is None:
                logger.error("Stage 1 failed", region=regions[index].label, error=error)
                result.error_messages.append(f"Stage 1 failed for {error}")
            else:
                fits[index] = fit
        result.stage1 = [fits[i] for i in sorted(fits)]
        result.status = "regions_fitted"
        return fits

    def _fit_one_pair(self, pair: PairEstimate, regions: Sequence[RegionData],
                      fits: Dict[int, Stage1Fit], config: RunConfig) -> PairEstimate:
        region1, region2 = regions[pair.j], regions[pair.k]
        try:
            pair.ca = corr_of_averages(region1.X, region2.X)
            pair.ca_p_value = ca_p_value(pair.ca, region1.n_times)
        except ValueError as e:
            logger.warning("Correlation of averages unavailable", pair=f"{pair.label_1}-{pair.label_2}", error=str(e))

        if pair.j not in fits or pair.k not in fits:
            pair.status = "failed"
            pair.error = "Stage 1 failed for a member region"
            return pair
        fit1, fit2 = fits[pair.j], fits[pair.k]
        try:
            pair.fe = fe_correlation(fit1.nu_hat, fit2.nu_hat)
        except ValueError:
            pass

        try:
            fit = fit_pair(region1, region2, fit1, fit2, config.stage2,
                           OptimizerOptions.from_settings(config.optimizer), config.kernels,
                           config.stage1.allow_duplicate_voxels)
        except PAIR_ERRORS as e:
            pair.status = "failed"
            pair.error = f"{type(e).__name__}: {e}"
            return pair

        pair.fit = fit
        pair.rho_hat = fit.rho_hat
        try:
            pair.spatial_noise_effect = spatial_noise_effect(fit.theta, region1.coords, region2.coords)
        except ValueError:
            pass

        try:
            model = PairModel.from_regions(region1, region2, config.kernels,
                                           config.stage1.allow_duplicate_voxels)
            pair.apply_inference(infer_pair(fit, model, config.inference.alpha,
                                            config.inference.se_mode))
        except SingularInformationError as e:
            pair.status = "no-inference"
            pair.error = str(e)
        except PAIR_ERRORS as e:
            pair.status = "no-inference"
            pair.error = f"{type(e).__name__}: {e}"
        return pair

    def fit_pairs(self, regions: Sequence[RegionData], fits: Dict[int, Stage1Fit],
                  result: NetworkResult, config: RunConfig) -> NetworkResult:
        """Stage 2 and inference once per unordered pair, gathered in pair order."""
        with PerformanceMonitor("fit_pairs", self.metrics, {"pairs": len(result.pairs)}):
            logger.info("Fitting pairs", pairs=len(result.pairs), workers=config.workers)
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                result.pairs = list(executor.map(
                    lambda pair: self._fit_one_pair(pair, regions, fits, config), result.pairs))

        for pair in result.pairs:
            if not pair.ok:
                logger.warning("Pair excluded from selection", pair=f"{pair.label_1}-{pair.label_2}",
                               status=pair.status, error=pair.error)
                result.error_messages.append(f"{pair.label_1}-{pair.label_2}: {pair.status}: {pair.error}")
        result.status = "pairs_fitted"
        return result

    def select_edges(self, result: NetworkResult) -> NetworkResult:
        """FDR selection on the successful pairs and on the correlation-of-averages p-values."""
        ok_pairs = result.successful_pairs()
        for pair in result.pairs:
            pair.selected = False
            pair.ca_selected = False
        for i in _select(ok_pairs, "p_value", result.q, self.fdr_method):
            ok_pairs[i].selected = True
        for i in _select(result.pairs, "ca_p_value", result.q, self.fdr_method):
            result.pairs[i].ca_selected = True

        result.node_degree, result.fcs = summarize(result)
        result.comparison = {"method": self.fdr_method, **compare_networks(result)}
        result.status = "completed"
        logger.info("Edges selected", q=result.q, method=self.fdr_method,
                    tested=len(ok_pairs), selected=result.comparison["reml_edges"],
                    ca_selected=result.comparison["ca_edges"])
        return result

    def run(self, regions: Sequence[RegionData], config: Optional[RunConfig] = None) -> NetworkResult:
        """
        Run the complete network pipeline.

        Args:
            regions: Dataset with at least two regions sharing M
            config: Run configuration

        Returns:
            Network result; individual pair failures are recorded, not raised
        """
        config = config or RunConfig()
        start_time = time.perf_counter()
        self.validate(regions, config)
        result = self.create_result(regions, config)
        logger.info("Starting network fit", regions=len(regions), pairs=len(result.pairs),
                    stage2_mode=config.stage2.mode, se_mode=config.inference.se_mode)

        fits = self.fit_regions(regions, result, config)
        self.fit_pairs(regions, fits, result, config)
        self.select_edges(result)

        logger.info("Network fit completed", duration=time.perf_counter() - start_time,
                    failed=len(result.pairs) - len(result.successful_pairs()))
        return result


def fit_network(regions: Sequence[RegionData], config: Optional[RunConfig] = None) -> NetworkResult:
    """Stage 1 per region, Stage 2 and inference per pair, then FDR selection."""
    return network_pipeline.run(regions, config)


def reselect(network: NetworkResult, q: Optional[float] = None, method: str = "by") -> NetworkResult:
    """Redo the selection of a stored network from its p-values at a new level."""
    if q is not None:
        network.q = q
    return NetworkPipeline(method).select_edges(network)


# Global network pipeline instance
network_pipeline = NetworkPipeline()
