"""Observed data containers."""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np


@dataclass(frozen=True, eq=False)
class RegionData:
    """
    One region's voxel coordinates and signals.

    Row l of ``X`` is the time series of the voxel at ``coords[l]``. The
    vectorized signal is voxel-major with time fastest, i.e. ``X.ravel()``.
    """
    label: str
    coords: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        X = np.array(self.X, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"{self.label}: coords must be L x 3")
        if X.ndim != 2 or X.shape[0] != coords.shape[0]:
            raise ValueError(f"{self.label}: X must be L x M with one row per voxel")
        coords.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "X", X)

    @property
    def n_voxels(self) -> int:
        return self.X.shape[0]

    @property
    def n_times(self) -> int:
        return self.X.shape[1]

    def times(self) -> np.ndarray:
        return np.arange(1, self.n_times + 1, dtype=float)

    def vectorized(self) -> np.ndarray:
        return self.X.ravel()

    def mean_series(self) -> np.ndarray:
        """Voxel-averaged time series."""
        return self.X.mean(axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {"label": self.label, "coords": self.coords.tolist(), "X": self.X.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegionData":
        return cls(label=data["label"], coords=np.asarray(data["coords"]), X=np.asarray(data["X"]))
