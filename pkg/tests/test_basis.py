"""
Tests for the spline basis of the regional fixed effect.
"""

import numpy as np
import pytest

from src.core.basis import SplineBasis, make_basis, ols_init


class TestSplineBasis:
    """Test cases for the B-spline design."""

    def setup_method(self):
        """Setup test fixtures."""
        self.times = np.arange(1.0, 61.0)

    def test_shape_and_partition_of_unity(self):
        """Test design shape and unit row sums."""
        G = make_basis(self.times, 30)
        assert G.shape == (60, 30)
        assert np.allclose(G.sum(axis=1), 1.0)
        assert np.all(G >= 0)

    def test_interior_knots_for_k45(self):
        """Test 41 equally spaced interior knots at M=60, K=45."""
        basis = SplineBasis.from_times(self.times, 45)
        assert basis.interior_knots.size == 41
        assert np.allclose(np.diff(basis.interior_knots), np.diff(basis.interior_knots)[0])
        assert basis.knots.size == 45 + 4
        assert np.all(basis.knots[:4] == 1.0) and np.all(basis.knots[-4:] == 60.0)

    def test_k4_spans_cubics(self):
        """Test that K=4 reproduces any cubic exactly."""
        t = np.linspace(0.0, 3.0, 9)
        G = make_basis(t, 4)
        assert np.allclose(G.sum(axis=1), 1.0)
        y = 1.0 - 2.0 * t + 0.5 * t ** 2 - 0.1 * t ** 3
        coef, *_ = np.linalg.lstsq(G, y, rcond=None)
        assert np.allclose(G @ coef, y, atol=1e-10)

    @pytest.mark.parametrize("M,K", [(3, 4), (10, 3), (10, 11)])
    def test_invalid_sizes(self, M, K):
        """Test M < 4, K < 4 and K > M."""
        with pytest.raises(ValueError):
            make_basis(np.arange(1.0, M + 1), K)

    def test_full_rank(self):
        """Test that the design has full column rank."""
        G = make_basis(self.times, 45)
        assert np.linalg.matrix_rank(G) == 45


class TestOlsInit:
    """Test cases for the least-squares warm start."""

    def setup_method(self):
        """Setup test fixtures."""
        self.times = np.arange(1.0, 21.0)
        self.G = make_basis(self.times, 8)

    def test_constant_signal(self):
        """Test reproduction of a constant."""
        X = np.full((5, 20), 3.5)
        v = ols_init(self.G, X)
        assert np.allclose(self.G @ v, 3.5)

    def test_recovers_generating_coefficients(self, rng):
        """Test noiseless recovery of spline coefficients."""
        v_true = rng.normal(size=8)
        X = np.tile(self.G @ v_true, (4, 1))
        assert np.allclose(ols_init(self.G, X), v_true, atol=1e-8)

    def test_matches_stacked_regression(self, rng):
        """Test equality with OLS on the voxel-stacked design."""
        X = rng.normal(size=(3, 20))
        stacked = np.kron(np.ones((3, 1)), self.G)
        expected, *_ = np.linalg.lstsq(stacked, X.ravel(), rcond=None)
        assert np.allclose(ols_init(self.G, X), expected)

    def test_rank_deficient_design(self):
        """Test rejection of a rank-deficient design."""
        G = np.column_stack([self.G, self.G[:, 0]])
        with pytest.raises(ValueError):
            ols_init(G, np.ones((2, 20)))


if __name__ == "__main__":
    pytest.main([__file__])
