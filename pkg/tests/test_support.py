"""
Tests for configuration, monitoring, validation and the data models.
"""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from src.config.settings import RunConfig, RuntimeSettings
from src.models.data import RegionData
from src.models.params import EtaCovParams, ModelConfig, PairTheta, RegionTheta
from src.utils.monitoring import MetricsCollector, PerformanceMonitor
from src.utils.validation import (
    DatasetValidator,
    ValidationCriteria,
    ensure_correlation_matrix,
    ensure_strictly_increasing,
)


class TestRunConfig:
    """Test cases for the run configuration."""

    def test_defaults(self):
        """Test documented defaults."""
        config = RunConfig()
        assert config.stage1.n_basis == 30
        assert config.stage2.mode == "refine"
        assert config.optimizer.method == "bobyqa"
        assert config.inference.se_mode == "full-inverse"
        assert config.network.q == 0.01

    def test_file_and_overrides(self, tmp_path):
        """Test dotted overrides win over the file and None is skipped."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"stage1": {"n_basis": 20}, "network": {"q": 0.05}}))
        config = RunConfig.from_sources(str(path), {"stage1.n_basis": 12, "network.q": None,
                                                    "stage2.mode": "fixed"})
        assert config.stage1.n_basis == 12
        assert config.network.q == 0.05
        assert config.stage2.mode == "fixed"

    def test_invalid_values(self):
        """Test unknown keys and out-of-range values."""
        with pytest.raises(ValidationError):
            RunConfig.from_sources(overrides={"stage1.n_basis": 2})
        with pytest.raises(ValidationError):
            RunConfig.from_sources(overrides={"stage1.knots": 3})
        with pytest.raises(ValidationError):
            RunConfig.from_sources(overrides={"inference.se_mode": "sandwich"})

    def test_environment(self, monkeypatch):
        """Test VOXCONN_* variables."""
        monkeypatch.setenv("VOXCONN_WORKERS", "3")
        monkeypatch.setenv("VOXCONN_LOG_LEVEL", "debug")
        runtime = RuntimeSettings()
        assert runtime.workers == 3
        assert runtime.log_level == "DEBUG"
        monkeypatch.setenv("VOXCONN_LOG_LEVEL", "chatty")
        with pytest.raises(ValidationError):
            RuntimeSettings()


class TestMonitoring:
    """Test cases for MetricsCollector and PerformanceMonitor."""

    def setup_method(self):
        """Setup test fixtures."""
        self.collector = MetricsCollector()

    def test_fit_counters(self):
        """Test labelled counters."""
        self.collector.record_fit("stage1", "converged", 0.2)
        self.collector.record_fit("stage1", "converged", 0.3)
        labels = {"stage": "stage1", "status": "converged"}
        assert self.collector.counter_value("voxconn_fits", labels) == 2
        assert self.collector.counter_value("voxconn_fits", {"stage": "stage2", "status": "converged"}) == 0

    def test_performance_monitor(self):
        """Test success and failure records."""
        with PerformanceMonitor("simulate", self.collector, {"replicate": 1}) as monitor:
            pass
        assert monitor.duration >= 0
        with pytest.raises(RuntimeError):
            with PerformanceMonitor("fit_pairs", self.collector):
                raise RuntimeError("boom")
        summary = self.collector.get_performance_summary()
        assert summary["total_operations"] == 2
        assert summary["failure_count"] == 1
        assert self.collector.get_error_summary()["error_types"] == {"RuntimeError": 1}

    def test_exports(self, tmp_path):
        """Test JSON and Prometheus exports."""
        self.collector.record_jitter_retry()
        self.collector.record_eigen_clamp(3)
        self.collector.export_metrics(str(tmp_path / "metrics.json"))
        self.collector.write_prometheus(str(tmp_path / "metrics.prom"))
        data = json.loads((tmp_path / "metrics.json").read_text())
        assert data["metrics"]["samples"]["voxconn_eigenvalue_clamps_total"] == 3
        assert "voxconn_cholesky_jitter_retries_total 1.0" in (tmp_path / "metrics.prom").read_text()


class TestValidation:
    """Test cases for input validation."""

    def test_strictly_increasing(self):
        """Test time grids."""
        assert ensure_strictly_increasing([3.0]).shape == (1,)
        with pytest.raises(ValueError):
            ensure_strictly_increasing([1.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            ensure_strictly_increasing([2.0, 1.0])

    def test_correlation_matrix(self):
        """Test unit diagonal, symmetry and definiteness."""
        ensure_correlation_matrix("R", np.array([[1.0, 0.3], [0.3, 1.0]]))
        for bad in ([[2.0, 0.0], [0.0, 1.0]], [[1.0, 0.3], [0.2, 1.0]], [[1.0, 1.5], [1.5, 1.0]]):
            with pytest.raises(ValueError):
                ensure_correlation_matrix("R", np.array(bad))

    def test_dataset_validator(self):
        """Test every issue is reported."""
        regions = [
            RegionData("A", np.zeros((1, 3)), np.ones((1, 6))),
            RegionData("A", np.zeros((1, 3)), np.full((1, 5), np.nan)),
        ]
        report = DatasetValidator(ValidationCriteria(n_basis=5, min_regions=3)).validate(regions)
        assert not report.is_valid
        text = " ".join(report.issues)
        for fragment in ("at least 3 regions", "unique", "disagree", "basis size", "non-finite"):
            assert fragment in text


class TestModels:
    """Test cases for parameter and data containers."""

    def test_pair_theta_vector_order(self, reference_theta):
        """Test the fixed parameter order."""
        vector = reference_theta.to_vector()
        assert vector[PairTheta.index("rho")] == 0.6
        assert PairTheta.from_vector(vector) == reference_theta
        assert len(PairTheta.TRANSFORMS) == len(PairTheta.NAMES)

    def test_pair_theta_validation(self):
        """Test rho and positivity constraints."""
        values = dict(tau_eta=0.3, k_eta_ratio=1.0, phi_gamma_1=1.0, phi_gamma_2=1.0,
                      tau_gamma_1=0.5, tau_gamma_2=0.5, k_gamma_ratio_1=1.0, k_gamma_ratio_2=1.0,
                      rho=0.2, nugget_ratio=0.0)
        PairTheta(**values)
        with pytest.raises(ValueError):
            PairTheta(**{**values, "rho": 1.0})
        with pytest.raises(ValueError):
            PairTheta(**{**values, "tau_eta": 0.0})

    def test_swapped(self, reference_theta):
        """Test exchanging regions."""
        theta = reference_theta.with_values(phi_gamma_1=0.3)
        swapped = theta.swapped()
        assert swapped.phi_gamma_2 == 0.3
        assert swapped.region(1) == theta.region(2)
        assert swapped.swapped() == theta

    def test_model_config_round_trip(self):
        """Test ModelConfig dictionary round trip and pair parameters."""
        region = RegionTheta(phi_gamma=1.0, k_gamma_ratio=2.0, tau_gamma=0.5)
        config = ModelConfig(mu=(1.0, 2.0), R=np.array([[1.0, 0.4], [0.4, 1.0]]),
                             eta=EtaCovParams(k_eta_ratio=1.0, tau_eta=0.25, nugget_ratio=0.1),
                             regions=(region, region), M=8, L=3)
        loaded = ModelConfig.from_dict(json.loads(json.dumps(config.to_dict())))
        assert loaded.labels == ("R1", "R2")
        assert np.array_equal(loaded.R, config.R)
        assert loaded.pair_theta(0, 1).rho == 0.4
        assert np.array_equal(loaded.times(), np.arange(1.0, 9.0))

    def test_region_data_is_read_only(self):
        """Test signals cannot be modified in place."""
        X = np.arange(6.0).reshape(2, 3)
        region = RegionData("A", np.zeros((2, 3)), X)
        X[0, 0] = 99.0
        assert region.X[0, 0] == 0.0
        with pytest.raises(ValueError):
            region.X[0, 0] = 1.0
        assert np.array_equal(region.vectorized(), [0, 1, 2, 3, 4, 5])

    def test_region_data_shapes(self):
        """Test coordinate and signal shape checks."""
        with pytest.raises(ValueError):
            RegionData("A", np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            RegionData("A", np.zeros((2, 3)), np.zeros((3, 3)))


if __name__ == "__main__":
    pytest.main([__file__])
