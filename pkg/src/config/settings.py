"""
Configuration settings for voxconn.
Handles environment overrides, run configuration sections and their validation.
"""

import json
from pathlib import Path
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class RuntimeSettings(BaseSettings):
    """Process-level settings read from VOXCONN_* environment variables or a .env file."""

    model_config = SettingsConfigDict(env_prefix="VOXCONN_", env_file=".env", extra="ignore")

    workers: int = Field(default=4, ge=1)
    output_dir: Path = Path("results")
    log_level: str = "INFO"
    log_json: bool = False

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        level = value.upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"Unknown log level: {value}")
        return level


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class KernelSettings(_Section):
    """Kernel family choices."""
    temporal: Literal["rbf"] = "rbf"
    spatial: Literal["matern52"] = "matern52"


class OptimizerSettings(_Section):
    """Settings shared by both estimation stages."""
    method: Literal["bobyqa", "lbfgs"] = "bobyqa"
    # evaluations for bobyqa, iterations for lbfgs
    max_iter: int = Field(default=500, ge=1)
    ftol: float = Field(default=1e-8, gt=0)
    rho_begin: float = Field(default=0.5, gt=0)
    rho_end: float = Field(default=1e-8, gt=0)
    grad_step: float = Field(default=1e-5, gt=0)


class Stage1Settings(_Section):
    """Intra-regional fit settings."""
    n_basis: int = Field(default=30, ge=4)
    fix_fixed_effects: bool = False
    init_phi_gamma: float = Field(default=0.5, gt=0)
    init_k_gamma_ratio: float = Field(default=1.0, gt=0)
    init_tau_gamma: float = Field(default=0.5, gt=0)
    allow_duplicate_voxels: bool = False
    # False switches to plain maximum likelihood; debugging only
    restricted: bool = True


class Stage2Settings(_Section):
    """Inter-regional fit settings."""
    mode: Literal["refine", "fixed"] = "refine"
    init_tau_eta: float = Field(default=0.25, gt=0)
    init_nugget_ratio: float = Field(default=0.1, gt=0)
    k_eta_floor: float = Field(default=0.05, gt=0)
    rho_clip: float = Field(default=0.95, gt=0, lt=1)
    boundary_rho: float = Field(default=0.999, gt=0, lt=1)


class InferenceSettings(_Section):
    """Standard error and interval settings."""
    se_mode: Literal["full-inverse", "marginal"] = "full-inverse"
    alpha: float = Field(default=0.05, gt=0, lt=1)


class NetworkSettings(_Section):
    """FDR settings for network construction."""
    q: float = Field(default=0.01, gt=0, lt=1)


class RunConfig(_Section):
    """Validated configuration for one command invocation."""
    kernels: KernelSettings = KernelSettings()
    optimizer: OptimizerSettings = OptimizerSettings()
    stage1: Stage1Settings = Stage1Settings()
    stage2: Stage2Settings = Stage2Settings()
    inference: InferenceSettings = InferenceSettings()
    network: NetworkSettings = NetworkSettings()
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)
    output_dir: Path = Field(default_factory=lambda: settings.output_dir)

    @classmethod
    def from_sources(cls, path: Optional[str] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """
        Build a run configuration from an optional JSON file plus overrides.

        Overrides use dotted keys (``"stage2.mode"``); ``None`` values are skipped.

        Raises:
            pydantic.ValidationError: on unknown keys or out-of-range values.
        """
        data: Dict[str, Any] = {}
        if path:
            with open(path) as f:
                data = json.load(f)
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            target = data
            *parents, leaf = key.split(".")
            for parent in parents:
                target = target.setdefault(parent, {})
            target[leaf] = value
        return cls.model_validate(data)


# Global settings instance
settings = RuntimeSettings()
