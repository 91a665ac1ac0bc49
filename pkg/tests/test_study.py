"""
Tests for replicate simulation studies.
"""

import json

import numpy as np
import pandas as pd
import pytest

from src.config.settings import RunConfig
from src.pipeline.study import COVERAGE_ALPHAS, StudyResult, run_study
from src.simulation.simulator import get_preset


def record(replicate, rho_hat, fe, ca, covered):
    return {
        "replicate": replicate, "pair": "R1-R2", "rho": 0.5, "status": "ok",
        "rho_hat": rho_hat, "se_rho": 0.1, "p_value": 0.01, "fe": fe, "ca": ca,
        "selected": True, "ca_selected": False, "covered_0.05": covered,
    }


class TestStudyTables:
    """Test cases for the aggregate tables."""

    def setup_method(self):
        """Setup test fixtures."""
        records = [
            record(0, 0.4, 0.3, 0.2, 1.0),
            record(1, 0.6, 0.5, 0.2, 1.0),
            record(2, 0.5, np.nan, 0.2, 0.0),
            record(3, 0.7, 0.4, 0.2, np.nan),
        ]
        self.result = StudyResult(scenario={"name": "unit"}, replicates=4, alphas=(0.05,),
                                  records=records)

    def test_summary(self):
        """Test bias, SD and RMSE per estimator."""
        summary = self.result.summary().set_index("estimator")
        reml = summary.loc["reml"]
        assert reml["n"] == 4
        assert reml["bias"] == pytest.approx(0.05)
        assert reml["rmse"] == pytest.approx(np.sqrt((0.01 + 0.01 + 0.0 + 0.04) / 4))
        assert reml["sd"] == pytest.approx(np.std([0.4, 0.6, 0.5, 0.7], ddof=1))
        assert summary.loc["fe", "n"] == 3
        assert summary.loc["ca", "abs_bias"] == pytest.approx(0.3)
        assert summary.loc["ca", "rmse"] == pytest.approx(0.3)

    def test_coverage(self):
        """Test coverage ignores pairs without intervals."""
        coverage = self.result.coverage()
        assert len(coverage) == 1
        row = coverage.iloc[0]
        assert row["nominal"] == pytest.approx(0.95)
        assert row["coverage"] == pytest.approx(2 / 3)
        assert row["n"] == 3

    def test_empty_study(self):
        """Test tables of a study without records."""
        empty = StudyResult(scenario={}, replicates=0, alphas=(0.05,))
        assert empty.summary().empty
        assert empty.coverage().empty

    def test_save(self, tmp_path):
        """Test JSON and CSV artifacts."""
        json_path, csv_path = tmp_path / "study.json", tmp_path / "summary.csv"
        self.result.save(str(json_path), str(csv_path))
        data = json.loads(json_path.read_text())
        assert data["kind"] == "study"
        assert len(data["records"]) == 4
        assert data["records"][2]["fe"] is None
        assert len(pd.read_csv(csv_path)) == 3


class TestRunStudy:
    """Test cases for run_study on a tiny scenario."""

    def test_records_in_replicate_order(self):
        """Test one record per pair and replicate."""
        scenario = get_preset("paper-s4", seed=5, L=3, M=12)
        config = RunConfig.from_sources(overrides={
            "stage1.n_basis": 4, "optimizer.max_iter": 30, "inference.se_mode": "marginal",
            "workers": 2,
        })
        result = run_study(scenario, 2, config)
        assert len(result.records) == 6
        assert [r["replicate"] for r in result.records] == [0, 0, 0, 1, 1, 1]
        assert [r["pair"] for r in result.records[:3]] == ["R1-R2", "R1-R3", "R2-R3"]
        assert [r["rho"] for r in result.records[:3]] == [0.1, 0.35, 0.6]
        assert all(f"covered_{alpha:g}" in result.records[0] for alpha in COVERAGE_ALPHAS)
        assert set(result.summary()["estimator"]) == {"reml", "fe", "ca"}

    def test_invalid_replicates(self):
        """Test a non-positive replicate count."""
        with pytest.raises(ValueError):
            run_study("null", 0)


if __name__ == "__main__":
    pytest.main([__file__])
