"""Builders for small random test instances."""

import numpy as np

from src.models.params import PairTheta


def lattice_coords(rng: np.random.Generator, L: int, side: int = 4) -> np.ndarray:
    """L distinct integer lattice points."""
    flat = rng.choice(side ** 3, size=L, replace=False)
    return np.column_stack(np.unravel_index(flat, (side,) * 3)).astype(float)


def random_pair_theta(rng: np.random.Generator) -> PairTheta:
    return PairTheta(
        tau_eta=rng.uniform(0.2, 1.0),
        k_eta_ratio=rng.uniform(0.3, 2.0),
        phi_gamma_1=rng.uniform(0.2, 1.5),
        phi_gamma_2=rng.uniform(0.2, 1.5),
        tau_gamma_1=rng.uniform(0.2, 1.0),
        tau_gamma_2=rng.uniform(0.2, 1.0),
        k_gamma_ratio_1=rng.uniform(0.3, 2.5),
        k_gamma_ratio_2=rng.uniform(0.3, 2.5),
        rho=rng.uniform(-0.8, 0.8),
        nugget_ratio=rng.uniform(0.05, 0.5),
    )
