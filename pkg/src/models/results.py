"""
Result models for voxconn.
Defines fit outputs, per-pair estimates and the network result, with JSON serialization.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from dataclasses_json import dataclass_json

from .params import PairTheta, RegionTheta

SCHEMA_VERSION = 1


def clean_json(value: Any) -> Any:
    """Recursively convert numpy values to builtins and NaN/inf to None."""
    if isinstance(value, dict):
        return {k: clean_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean_json(v) for v in value]
    if isinstance(value, np.ndarray):
        return clean_json(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(data: Dict[str, Any], filepath: str) -> None:
    """Write a JSON artifact with the schema version field."""
    payload = {"schema_version": SCHEMA_VERSION, **clean_json(data)}
    with open(filepath, "w") as f:
        json.dump(payload, f, indent=2, allow_nan=False)
        f.write("\n")


def read_json(filepath: str) -> Dict[str, Any]:
    with open(filepath, "r") as f:
        data = json.load(f)
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"{filepath}: unsupported schema_version {version}")
    return data


def _nan_if_none(value: Optional[float]) -> float:
    return float("nan") if value is None else float(value)


@dataclass(eq=False)
class Stage1Fit:
    """Intra-regional fit of one region."""
    label: str
    theta: RegionTheta
    v_hat: np.ndarray
    sigma2_hat: float
    nu_hat: np.ndarray
    objective: float
    convergence: Dict[str, Any] = field(default_factory=dict)
    fixed_effects: str = "profiled"

    @property
    def status(self) -> str:
        return self.convergence.get("status", "unknown")

    def to_dict(self) -> Dict[str, Any]:
        """Convert fit to dictionary for serialization."""
        return {
            "label": self.label,
            "theta": self.theta.to_dict(),
            "v_hat": self.v_hat.tolist(),
            "sigma2_hat": self.sigma2_hat,
            "nu_hat": self.nu_hat.tolist(),
            "objective": self.objective,
            "convergence": self.convergence,
            "fixed_effects": self.fixed_effects,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Stage1Fit":
        """Create fit from dictionary."""
        return cls(
            label=data["label"],
            theta=RegionTheta.from_dict(data["theta"]),
            v_hat=np.asarray(data["v_hat"], dtype=float),
            sigma2_hat=data["sigma2_hat"],
            nu_hat=np.asarray(data["nu_hat"], dtype=float),
            objective=data["objective"],
            convergence=data.get("convergence", {}),
            fixed_effects=data.get("fixed_effects", "profiled"),
        )

    def save(self, filepath: str) -> None:
        write_json({"kind": "stage1_fit", **self.to_dict()}, filepath)

    @classmethod
    def load(cls, filepath: str) -> "Stage1Fit":
        return cls.from_dict(read_json(filepath))


@dataclass(eq=False)
class Stage2Fit:
    """Inter-regional fit of one region pair."""
    label_1: str
    label_2: str
    theta: PairTheta
    mu_hat: np.ndarray
    sigma2_hat: float
    objective: float
    convergence: Dict[str, Any] = field(default_factory=dict)
    stage1_source: str = "refined"
    rho_at_boundary: bool = False

    @property
    def rho_hat(self) -> float:
        return self.theta.rho

    @property
    def status(self) -> str:
        return self.convergence.get("status", "unknown")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label_1": self.label_1,
            "label_2": self.label_2,
            "theta": self.theta.to_dict(),
            "rho_hat": self.rho_hat,
            "mu_hat": self.mu_hat.tolist(),
            "sigma2_hat": self.sigma2_hat,
            "objective": self.objective,
            "convergence": self.convergence,
            "stage1_source": self.stage1_source,
            "rho_at_boundary": self.rho_at_boundary,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Stage2Fit":
        return cls(
            label_1=data["label_1"],
            label_2=data["label_2"],
            theta=PairTheta.from_dict(data["theta"]),
            mu_hat=np.asarray(data["mu_hat"], dtype=float),
            sigma2_hat=data["sigma2_hat"],
            objective=data["objective"],
            convergence=data.get("convergence", {}),
            stage1_source=data.get("stage1_source", "refined"),
            rho_at_boundary=data.get("rho_at_boundary", False),
        )


@dataclass_json
@dataclass(frozen=True)
class PairInference:
    """Asymptotic inference for the inter-regional correlation."""
    se_rho: float
    se_z: float
    z_score: float
    p_value: float
    ci_lower: float
    ci_upper: float
    alpha: float
    mode: str


@dataclass(eq=False)
class PairEstimate:
    """Everything estimated for one region pair."""
    j: int
    k: int
    label_1: str
    label_2: str
    status: str = "ok"
    rho_hat: float = float("nan")
    se_rho: float = float("nan")
    se_z: float = float("nan")
    z_score: float = float("nan")
    p_value: float = float("nan")
    ci_lower: float = float("nan")
    ci_upper: float = float("nan")
    alpha: float = 0.05
    se_mode: str = "full-inverse"
    ca: float = float("nan")
    fe: float = float("nan")
    ca_p_value: float = float("nan")
    spatial_noise_effect: float = float("nan")
    selected: bool = False
    ca_selected: bool = False
    error: Optional[str] = None
    fit: Optional[Stage2Fit] = None

    SUMMARY_FIELDS = (
        "j", "k", "label_1", "label_2", "status", "rho_hat", "se_rho", "se_z", "z_score",
        "p_value", "ci_lower", "ci_upper", "alpha", "se_mode", "ca", "fe", "ca_p_value",
        "spatial_noise_effect", "selected", "ca_selected", "error",
    )

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def apply_inference(self, inference: PairInference) -> None:
        self.se_rho = inference.se_rho
        self.se_z = inference.se_z
        self.z_score = inference.z_score
        self.p_value = inference.p_value
        self.ci_lower = inference.ci_lower
        self.ci_upper = inference.ci_upper
        self.alpha = inference.alpha
        self.se_mode = inference.mode

    def summary(self) -> Dict[str, Any]:
        """Flat record without the nested fit."""
        return {name: getattr(self, name) for name in self.SUMMARY_FIELDS}

    def to_dict(self) -> Dict[str, Any]:
        data = self.summary()
        data["fit"] = self.fit.to_dict() if self.fit is not None else None
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PairEstimate":
        values = {name: data.get(name) for name in cls.SUMMARY_FIELDS if name in data}
        for name in ("rho_hat", "se_rho", "se_z", "z_score", "p_value", "ci_lower",
                     "ci_upper", "ca", "fe", "ca_p_value", "spatial_noise_effect"):
            if name in values:
                values[name] = _nan_if_none(values[name])
        fit = Stage2Fit.from_dict(data["fit"]) if data.get("fit") else None
        return cls(**values, fit=fit)


@dataclass(eq=False)
class NetworkResult:
    """All pairwise estimates with the FDR-selected network and node summaries."""
    labels: List[str]
    pairs: List[PairEstimate]
    q: float
    node_degree: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    fcs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    comparison: Dict[str, Any] = field(default_factory=dict)
    stage1: List[Stage1Fit] = field(default_factory=list)
    status: str = "initialized"
    error_messages: List[str] = field(default_factory=list)

    @property
    def J(self) -> int:
        return len(self.labels)

    def successful_pairs(self) -> List[PairEstimate]:
        return [p for p in self.pairs if p.ok]

    def selected_edges(self) -> List[PairEstimate]:
        return [p for p in self.pairs if p.selected]

    def adjacency(self) -> np.ndarray:
        """J x J matrix of rho_hat on selected edges, 0 elsewhere."""
        A = np.zeros((self.J, self.J))
        for p in self.selected_edges():
            A[p.j, p.k] = A[p.k, p.j] = p.rho_hat
        return A

    def to_dict(self) -> Dict[str, Any]:
        """Convert result to dictionary for serialization."""
        return {
            "kind": "network",
            "J": self.J,
            "labels": list(self.labels),
            "q": self.q,
            "status": self.status,
            "pairs": [p.to_dict() for p in self.pairs],
            "node_degree": np.asarray(self.node_degree).tolist(),
            "fcs": np.asarray(self.fcs).tolist(),
            "comparison": self.comparison,
            "stage1": [f.to_dict() for f in self.stage1],
            "error_messages": self.error_messages,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkResult":
        """Create result from dictionary."""
        return cls(
            labels=list(data["labels"]),
            pairs=[PairEstimate.from_dict(p) for p in data["pairs"]],
            q=data["q"],
            node_degree=np.asarray(data.get("node_degree", []), dtype=int),
            fcs=np.asarray([_nan_if_none(v) for v in data.get("fcs", [])], dtype=float),
            comparison=data.get("comparison", {}),
            stage1=[Stage1Fit.from_dict(f) for f in data.get("stage1", [])],
            status=data.get("status", "loaded"),
            error_messages=data.get("error_messages", []),
        )

    def save(self, filepath: str) -> None:
        """Save result to JSON file."""
        write_json(self.to_dict(), filepath)

    @classmethod
    def load(cls, filepath: str) -> "NetworkResult":
        """Load result from JSON file."""
        return cls.from_dict(read_json(filepath))
