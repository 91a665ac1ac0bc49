"""
Parameter models for voxconn.
Kernel parameters, variance components and the simulation model configuration.
All variance parameters are ratios to the measurement-error variance sigma2.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from ..utils.validation import (
    ensure_correlation_matrix,
    ensure_nonnegative,
    ensure_positive,
)


@dataclass_json
@dataclass(frozen=True)
class TemporalKernelParams:
    """Rate of a temporal correlation kernel (inverse sample units)."""
    tau: float

    def __post_init__(self):
        ensure_positive("tau", self.tau)


@dataclass_json
@dataclass(frozen=True)
class SpatialKernelParams:
    """Rate of a spatial correlation kernel (inverse voxel units)."""
    phi: float

    def __post_init__(self):
        ensure_positive("phi", self.phi)


@dataclass_json
@dataclass(frozen=True)
class EtaCovParams:
    """Shared regional signal covariance: k_eta_ratio * G(tau_eta) + nugget_ratio * I."""
    k_eta_ratio: float
    tau_eta: float
    nugget_ratio: float

    def __post_init__(self):
        ensure_nonnegative("k_eta_ratio", self.k_eta_ratio)
        ensure_positive("tau_eta", self.tau_eta)
        ensure_nonnegative("nugget_ratio", self.nugget_ratio)


@dataclass_json
@dataclass(frozen=True)
class RegionTheta:
    """Intra-regional variance components of one region."""
    phi_gamma: float
    k_gamma_ratio: float
    tau_gamma: float

    NAMES = ("phi_gamma", "k_gamma_ratio", "tau_gamma")

    def __post_init__(self):
        ensure_positive("phi_gamma", self.phi_gamma)
        ensure_nonnegative("k_gamma_ratio", self.k_gamma_ratio)
        ensure_positive("tau_gamma", self.tau_gamma)

    def to_vector(self) -> np.ndarray:
        return np.array([self.phi_gamma, self.k_gamma_ratio, self.tau_gamma])

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "RegionTheta":
        phi, k, tau = (float(v) for v in values)
        return cls(phi_gamma=phi, k_gamma_ratio=k, tau_gamma=tau)


@dataclass_json
@dataclass(frozen=True)
class PairTheta:
    """The ten covariance parameters of the inter-regional model."""
    tau_eta: float
    k_eta_ratio: float
    phi_gamma_1: float
    phi_gamma_2: float
    tau_gamma_1: float
    tau_gamma_2: float
    k_gamma_ratio_1: float
    k_gamma_ratio_2: float
    rho: float
    nugget_ratio: float

    NAMES = (
        "tau_eta", "k_eta_ratio", "phi_gamma_1", "phi_gamma_2", "tau_gamma_1",
        "tau_gamma_2", "k_gamma_ratio_1", "k_gamma_ratio_2", "rho", "nugget_ratio",
    )
    TRANSFORMS = (
        "log", "log", "log", "log", "log", "log", "log", "log", "arctanh", "log",
    )

    def __post_init__(self):
        for name in ("tau_eta", "phi_gamma_1", "phi_gamma_2", "tau_gamma_1", "tau_gamma_2"):
            ensure_positive(name, getattr(self, name))
        for name in ("k_eta_ratio", "k_gamma_ratio_1", "k_gamma_ratio_2", "nugget_ratio"):
            ensure_nonnegative(name, getattr(self, name))
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")

    @classmethod
    def index(cls, name: str) -> int:
        return cls.NAMES.index(name)

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.NAMES], dtype=float)

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "PairTheta":
        if len(values) != len(cls.NAMES):
            raise ValueError(f"expected {len(cls.NAMES)} values, got {len(values)}")
        return cls(**{name: float(v) for name, v in zip(cls.NAMES, values)})

    @classmethod
    def from_parts(cls, eta: EtaCovParams, region1: RegionTheta, region2: RegionTheta,
                   rho: float) -> "PairTheta":
        return cls(
            tau_eta=eta.tau_eta,
            k_eta_ratio=eta.k_eta_ratio,
            phi_gamma_1=region1.phi_gamma,
            phi_gamma_2=region2.phi_gamma,
            tau_gamma_1=region1.tau_gamma,
            tau_gamma_2=region2.tau_gamma,
            k_gamma_ratio_1=region1.k_gamma_ratio,
            k_gamma_ratio_2=region2.k_gamma_ratio,
            rho=rho,
            nugget_ratio=eta.nugget_ratio,
        )

    @property
    def eta(self) -> EtaCovParams:
        return EtaCovParams(
            k_eta_ratio=self.k_eta_ratio, tau_eta=self.tau_eta, nugget_ratio=self.nugget_ratio
        )

    def region(self, which: int) -> RegionTheta:
        """Regional parameters of region 1 or 2."""
        if which not in (1, 2):
            raise ValueError("which must be 1 or 2")
        return RegionTheta(
            phi_gamma=getattr(self, f"phi_gamma_{which}"),
            k_gamma_ratio=getattr(self, f"k_gamma_ratio_{which}"),
            tau_gamma=getattr(self, f"tau_gamma_{which}"),
        )

    def swapped(self) -> "PairTheta":
        """Same model with the two regions exchanged."""
        return PairTheta.from_parts(self.eta, self.region(2), self.region(1), self.rho)

    def with_values(self, **changes: float) -> "PairTheta":
        return replace(self, **changes)


@dataclass_json
@dataclass(frozen=True)
class CALimitInputs:
    """Quantities of the limiting correlation of regional averages."""
    rho_star: float
    alpha_1: float
    alpha_2: float
    beta_1: float = 0.0
    beta_2: float = 0.0
    xi2_1: Optional[float] = None
    xi2_2: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha_1", "alpha_2"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0 + 1e-12:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        ensure_nonnegative("beta_1", self.beta_1)
        ensure_nonnegative("beta_2", self.beta_2)


def correlation_from_pairs(n_regions: int, pairs: Dict[Tuple[int, int], float]) -> np.ndarray:
    """Correlation matrix with unit diagonal and the given off-diagonal entries."""
    R = np.eye(n_regions)
    for (j, k), value in pairs.items():
        R[j, k] = R[k, j] = value
    return R


@dataclass(eq=False)
class ModelConfig:
    """Generative model for simulated datasets."""
    mu: Tuple[float, ...]
    R: np.ndarray
    eta: EtaCovParams
    regions: Tuple[RegionTheta, ...]
    sigma2: float = 1.0
    M: int = 60
    L: int = 50
    lattice_side: int = 7
    seed: int = 0
    labels: Optional[Tuple[str, ...]] = None
    name: str = "custom"
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.mu = tuple(float(m) for m in self.mu)
        self.regions = tuple(self.regions)
        J = len(self.mu)
        if J < 1:
            raise ValueError("at least one region is required")
        if len(self.regions) != J:
            raise ValueError(f"expected {J} regional parameter sets, got {len(self.regions)}")
        self.R = ensure_correlation_matrix("R", np.atleast_2d(self.R))
        if self.R.shape != (J, J):
            raise ValueError(f"R must be {J}x{J}")
        ensure_positive("sigma2", self.sigma2)
        if self.M < 1 or self.L < 1 or self.lattice_side < 1:
            raise ValueError("M, L and lattice_side must be positive")
        if self.L > self.lattice_side ** 3:
            raise ValueError(f"L={self.L} exceeds the {self.lattice_side ** 3} lattice points")
        if self.labels is None:
            self.labels = tuple(f"R{j + 1}" for j in range(J))
        elif len(self.labels) != J:
            raise ValueError("one label per region is required")

    @property
    def J(self) -> int:
        return len(self.mu)

    def times(self) -> np.ndarray:
        """Observed timepoints 1..M."""
        return np.arange(1, self.M + 1, dtype=float)

    def pair_theta(self, j: int, k: int) -> PairTheta:
        """True inter-regional parameters of regions j and k."""
        return PairTheta.from_parts(self.eta, self.regions[j], self.regions[k], float(self.R[j, k]))

    def to_dict(self) -> Dict[str, Any]:
        """Convert config to dictionary for serialization."""
        return {
            "name": self.name,
            "mu": list(self.mu),
            "R": self.R.tolist(),
            "eta": self.eta.to_dict(),
            "regions": [r.to_dict() for r in self.regions],
            "sigma2": self.sigma2,
            "M": self.M,
            "L": self.L,
            "lattice_side": self.lattice_side,
            "seed": self.seed,
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        """Create config from dictionary."""
        return cls(
            mu=tuple(data["mu"]),
            R=np.asarray(data["R"], dtype=float),
            eta=EtaCovParams.from_dict(data["eta"]),
            regions=tuple(RegionTheta.from_dict(r) for r in data["regions"]),
            sigma2=data.get("sigma2", 1.0),
            M=data.get("M", 60),
            L=data.get("L", 50),
            lattice_side=data.get("lattice_side", 7),
            seed=data.get("seed", 0),
            labels=tuple(data["labels"]) if data.get("labels") else None,
            name=data.get("name", "custom"),
        )
