"""
Tests for FDR selection and the network pipeline.
"""

from unittest.mock import patch

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.config.settings import RunConfig
from src.core.errors import CovarianceError, SingularInformationError
from src.models.data import RegionData
from src.models.params import PairTheta, RegionTheta
from src.models.results import NetworkResult, PairEstimate, PairInference, Stage1Fit, Stage2Fit
from src.pipeline.network import (
    NetworkPipeline,
    by_threshold,
    compare_networks,
    fit_network,
    reselect,
    summarize,
)
from tests.helpers import lattice_coords

p_values = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40)


class TestByThreshold:
    """Test cases for step-up FDR selection."""

    def test_small_example(self):
        """Test three hypotheses at q = 0.05."""
        assert by_threshold([0.001, 0.02, 0.5], 0.05) == [0]

    def test_step_up_rejects_below_last_passing(self):
        """Test the step-up rule rejects every p-value up to k*."""
        assert by_threshold([0.04, 0.01, 0.03, 0.9], 0.2, "bh") == [0, 1, 2]

    def test_nothing_selected(self):
        """Test all p-values equal to one."""
        assert by_threshold([1.0] * 5, 0.05) == []
        assert by_threshold([], 0.05) == []

    def test_invalid_inputs(self):
        """Test invalid levels, methods and p-values."""
        with pytest.raises(ValueError):
            by_threshold([0.1], 0.0)
        with pytest.raises(ValueError):
            by_threshold([0.1], 0.1, "holm")
        with pytest.raises(ValueError):
            by_threshold([1.5], 0.1)
        with pytest.raises(ValueError):
            by_threshold([float("nan")], 0.1)

    @given(p_values, st.floats(0.001, 0.5), st.floats(0.001, 0.5))
    def test_monotone_in_q(self, p, q1, q2):
        """Test a larger level never selects fewer hypotheses."""
        low, high = sorted((q1, q2))
        assert set(by_threshold(p, low)) <= set(by_threshold(p, high))

    @given(p_values, st.floats(0.001, 0.5))
    def test_by_within_bh(self, p, q):
        """Test Benjamini-Yekutieli is at least as strict as Benjamini-Hochberg."""
        assert set(by_threshold(p, q, "by")) <= set(by_threshold(p, q, "bh"))


def network_of(J, edges):
    """NetworkResult with the given (j, k, rho) edges selected."""
    labels = [f"R{j + 1}" for j in range(J)]
    pairs = []
    for j in range(J):
        for k in range(j + 1, J):
            pair = PairEstimate(j=j, k=k, label_1=labels[j], label_2=labels[k])
            for a, b, rho in edges:
                if (a, b) == (j, k):
                    pair.rho_hat, pair.selected = rho, True
            pairs.append(pair)
    return NetworkResult(labels=labels, pairs=pairs, q=0.05)


class TestSummarize:
    """Test cases for node degree and functional connectivity strength."""

    def test_no_edges(self):
        """Test an empty network."""
        degree, fcs = summarize(network_of(4, []))
        assert np.array_equal(degree, np.zeros(4))
        assert np.array_equal(fcs, np.zeros(4))

    def test_complete_graph(self):
        """Test every edge at 0.5 on four nodes."""
        edges = [(j, k, 0.5) for j in range(4) for k in range(j + 1, 4)]
        degree, fcs = summarize(network_of(4, edges))
        assert np.array_equal(degree, [3, 3, 3, 3])
        assert np.allclose(fcs, 0.5)

    def test_single_edge(self):
        """Test one edge on three nodes."""
        network = network_of(3, [(0, 1, 0.4)])
        degree, fcs = summarize(network)
        assert np.array_equal(degree, [1, 1, 0])
        assert np.allclose(fcs, [0.4, 0.4, 0.0])
        assert network.adjacency()[1, 0] == 0.4

    def test_compare_networks(self):
        """Test agreement counts of the two selections."""
        network = network_of(3, [(0, 1, 0.4), (1, 2, 0.2)])
        network.pairs[0].ca_selected = True
        network.pairs[1].ca_selected = True
        comparison = compare_networks(network)
        assert comparison["both"] == [["R1", "R2"]]
        assert comparison["reml_only"] == [["R2", "R3"]]
        assert comparison["ca_only"] == [["R1", "R3"]]
        assert (comparison["reml_edges"], comparison["ca_edges"]) == (2, 2)


class FakeEstimators:
    """Stand-ins for the estimation stages keyed by region labels."""

    def __init__(self, rho=None, p=None, fail=(), singular=()):
        self.rho = rho or {}
        self.p = p or {}
        self.fail = set(fail)
        self.singular = set(singular)
        self.fitted_regions = []

    def fit_region(self, region, stage1, optimizer=None, kernels=None):
        self.fitted_regions.append(region.label)
        return Stage1Fit(label=region.label, theta=RegionTheta(phi_gamma=1.0, k_gamma_ratio=1.0, tau_gamma=0.5),
                         v_hat=np.zeros(4), sigma2_hat=1.0, nu_hat=region.mean_series(), objective=0.0)

    def fit_pair(self, region1, region2, fit1, fit2, stage2=None, optimizer=None, kernels=None,
                 allow_duplicates=False):
        key = (region1.label, region2.label)
        if key in self.fail:
            raise CovarianceError("V is not positive definite after jitter", -1.0)
        theta = PairTheta(tau_eta=0.3, k_eta_ratio=1.0, phi_gamma_1=1.0, phi_gamma_2=1.0,
                          tau_gamma_1=0.5, tau_gamma_2=0.5, k_gamma_ratio_1=1.0,
                          k_gamma_ratio_2=1.0, rho=self.rho.get(key, 0.0), nugget_ratio=0.1)
        return Stage2Fit(label_1=region1.label, label_2=region2.label, theta=theta,
                         mu_hat=np.zeros(2), sigma2_hat=1.0, objective=0.0)

    def infer_pair(self, fit, model, alpha=0.05, se_mode="full-inverse"):
        key = (fit.label_1, fit.label_2)
        if key in self.singular:
            raise SingularInformationError("Fisher information is numerically singular")
        return PairInference(se_rho=0.1, se_z=0.1, z_score=0.0, p_value=self.p.get(key, 0.9),
                             ci_lower=-0.1, ci_upper=0.1, alpha=alpha, mode=se_mode)

    def patches(self):
        return (
            patch("src.pipeline.network.fit_region", side_effect=self.fit_region),
            patch("src.pipeline.network.fit_pair", side_effect=self.fit_pair),
            patch("src.pipeline.network.infer_pair", side_effect=self.infer_pair),
        )


def make_regions(J, L=2, M=8, seed=0):
    rng = np.random.default_rng(seed)
    return [RegionData(f"R{j + 1}", lattice_coords(rng, L), rng.normal(size=(L, M)) + j)
            for j in range(J)]


class TestNetworkPipeline:
    """Test cases for NetworkPipeline."""

    def setup_method(self):
        """Setup test fixtures."""
        self.config = RunConfig.from_sources(overrides={"stage1.n_basis": 4, "network.q": 0.05,
                                                        "workers": 2})

    def _run(self, fakes, regions, pipeline=None):
        pipeline = pipeline or NetworkPipeline()
        p1, p2, p3 = fakes.patches()
        with p1, p2, p3:
            return pipeline.run(regions, self.config)

    def test_selected_edges_and_order(self):
        """Test pair order, selection and summaries."""
        fakes = FakeEstimators(rho={("R1", "R2"): 0.6, ("R2", "R3"): 0.2},
                               p={("R1", "R2"): 1e-6, ("R2", "R3"): 1e-5})
        result = self._run(fakes, make_regions(3))
        assert [(p.j, p.k) for p in result.pairs] == [(0, 1), (0, 2), (1, 2)]
        assert [p.selected for p in result.pairs] == [True, False, True]
        assert np.array_equal(result.node_degree, [1, 2, 1])
        assert np.allclose(result.fcs, [0.6, 0.4, 0.2])
        assert result.status == "completed"
        assert sorted(fakes.fitted_regions) == ["R1", "R2", "R3"]
        assert all(np.isfinite(p.ca) and np.isfinite(p.fe) for p in result.pairs)

    def test_failed_pairs_are_excluded(self):
        """Test failures are recorded and left out of the tested family."""
        fakes = FakeEstimators(rho={("R1", "R2"): 0.6}, p={("R1", "R2"): 1e-6},
                               fail={("R1", "R3")}, singular={("R2", "R3")})
        result = self._run(fakes, make_regions(3))
        statuses = [p.status for p in result.pairs]
        assert statuses == ["ok", "failed", "no-inference"]
        assert len(result.successful_pairs()) == 1
        assert result.pairs[0].selected
        assert "CovarianceError" in result.pairs[1].error
        assert len(result.error_messages) == 2

    def test_stage1_failure_fails_member_pairs(self):
        """Test a region whose Stage 1 raises."""
        fakes = FakeEstimators()
        original = fakes.fit_region

        def flaky(region, *args, **kwargs):
            if region.label == "R2":
                raise ValueError("degenerate region")
            return original(region, *args, **kwargs)

        fakes.fit_region = flaky
        result = self._run(fakes, make_regions(3))
        assert [p.status for p in result.pairs] == ["failed", "ok", "failed"]
        assert [f.label for f in result.stage1] == ["R1", "R3"]

    def test_many_regions(self):
        """Test J = 21 gives 210 pairs in lexicographic order."""
        result = self._run(FakeEstimators(), make_regions(21, M=6))
        assert len(result.pairs) == 210
        assert [(p.j, p.k) for p in result.pairs[:3]] == [(0, 1), (0, 2), (0, 3)]
        assert (result.pairs[-1].j, result.pairs[-1].k) == (19, 20)
        assert not any(p.selected for p in result.pairs)

    def test_invalid_datasets(self):
        """Test single-region and mismatched datasets."""
        with pytest.raises(ValueError):
            NetworkPipeline().run(make_regions(1), self.config)
        regions = make_regions(2)
        regions[1] = RegionData("R2", regions[1].coords, np.ones((2, 5)))
        with pytest.raises(ValueError):
            NetworkPipeline().run(regions, self.config)
        with pytest.raises(ValueError):
            NetworkPipeline("storey")

    def test_reselect_and_round_trip(self, tmp_path):
        """Test selection at a new level after saving and loading."""
        fakes = FakeEstimators(rho={("R1", "R2"): 0.6, ("R1", "R3"): 0.3},
                               p={("R1", "R2"): 0.004, ("R1", "R3"): 0.03})
        result = self._run(fakes, make_regions(3))
        path = tmp_path / "network.json"
        result.save(str(path))
        loaded = NetworkResult.load(str(path))
        assert [p.p_value for p in loaded.pairs] == [p.p_value for p in result.pairs]
        relaxed = reselect(loaded, q=0.2, method="bh")
        assert sum(p.selected for p in relaxed.pairs) >= sum(p.selected for p in result.pairs)
        assert relaxed.q == 0.2
        assert relaxed.comparison["method"] == "bh"

    def test_fit_network_uses_global_pipeline(self):
        """Test the module-level entry point."""
        fakes = FakeEstimators()
        p1, p2, p3 = fakes.patches()
        with p1, p2, p3:
            result = fit_network(make_regions(2), self.config)
        assert len(result.pairs) == 1


if __name__ == "__main__":
    pytest.main([__file__])
