"""
Shared fixtures and options for the voxconn test suite.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from src.models.data import RegionData
from src.models.params import PairTheta
from tests.helpers import lattice_coords

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run long simulation studies")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def reference_theta():
    return PairTheta(
        tau_eta=0.25, k_eta_ratio=1.0, phi_gamma_1=1.0, phi_gamma_2=1.0,
        tau_gamma_1=0.5, tau_gamma_2=0.5, k_gamma_ratio_1=2.0, k_gamma_ratio_2=2.0,
        rho=0.6, nugget_ratio=0.1,
    )


@pytest.fixture
def small_pair(rng):
    """Two small regions with unstructured signals."""
    M = 6
    region1 = RegionData("A", lattice_coords(rng, 3), rng.normal(size=(3, M)) + 1.0)
    region2 = RegionData("B", lattice_coords(rng, 4), rng.normal(size=(4, M)) + 5.0)
    return region1, region2
