"""
Structured linear algebra for the mixed-model likelihoods.

``KroneckerSystem`` handles C (x) (k H) + I through the eigendecompositions of
its two factors. ``SchurSystem`` handles a symmetric 2x2 block matrix whose
off-diagonal block is given in factored form V12 = U T^T.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import structlog
from scipy import linalg

from .errors import CovarianceError
from ..utils.monitoring import metrics_collector

logger = structlog.get_logger(__name__)

EIGEN_FLOOR = 1e-10
CHOLESKY_JITTER = 1e-8


def cholesky_with_jitter(A: np.ndarray, name: str = "matrix",
                         jitter: float = CHOLESKY_JITTER) -> np.ndarray:
    """
    Lower Cholesky factor, retrying once with ``jitter`` added to the diagonal.

    Raises:
        CovarianceError: if the jittered matrix is still not positive definite
    """
    try:
        return linalg.cholesky(A, lower=True)
    except (linalg.LinAlgError, ValueError):
        pass

    metrics_collector.record_jitter_retry()
    try:
        return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
    except (linalg.LinAlgError, ValueError):
        min_eig = float(np.linalg.eigvalsh(A).min()) if np.all(np.isfinite(A)) else None
        raise CovarianceError(f"{name} is not positive definite after jitter", min_eig) from None


def psd_factor(A: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Sampling factor F with F F^T = A; the zero matrix gets a zero factor."""
    if not np.any(A):
        return np.zeros_like(A)
    return cholesky_with_jitter(A, name=name)


def cholesky_logdet(factor: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(factor))))


@dataclass
class GLSPieces:
    """Generalized least squares terms of a Kronecker model with design 1_L (x) G."""
    normal_matrix: np.ndarray
    normal_rhs: np.ndarray
    rotated_data: np.ndarray
    rotated_ones: np.ndarray
    rotated_design: np.ndarray


class KroneckerSystem:
    """
    V = C (x) (scale * H) + I for symmetric PSD C (L x L) and H (M x M).

    Vectors are L x M matrices in voxel-major, time-fastest order.
    """

    def __init__(self, C: np.ndarray, H: np.ndarray, scale: float = 1.0,
                 floor: float = EIGEN_FLOOR):
        lam_c, self.Qc = linalg.eigh(C)
        lam_h, self.Qh = linalg.eigh(H)
        self.clamped = int(np.sum(lam_c < floor) + np.sum(lam_h < floor))
        if self.clamped:
            metrics_collector.record_eigen_clamp(self.clamped)
        self.lam_c = np.maximum(lam_c, floor)
        self.lam_h = np.maximum(lam_h, floor)
        self.D = scale * np.outer(self.lam_c, self.lam_h) + 1.0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.D.shape

    def rotate(self, Y: np.ndarray) -> np.ndarray:
        """(Qc (x) Qh)^T applied to vec(Y)."""
        return self.Qc.T @ Y @ self.Qh

    def unrotate(self, Yt: np.ndarray) -> np.ndarray:
        return self.Qc @ Yt @ self.Qh.T

    def solve(self, Y: np.ndarray) -> np.ndarray:
        return self.unrotate(self.rotate(Y) / self.D)

    def logdet(self) -> float:
        return float(np.sum(np.log(self.D)))

    def quad(self, Y: np.ndarray) -> float:
        """vec(Y)^T V^-1 vec(Y)."""
        return float(np.sum(self.rotate(Y) ** 2 / self.D))

    def gls_pieces(self, design: np.ndarray, X: np.ndarray) -> GLSPieces:
        """
        Normal equations of GLS with the repeated design 1_L (x) ``design``.

        With c = Qc^T 1 and w_m = sum_l c_l^2 / D_lm the normal matrix reduces to
        (Qh^T G)^T diag(w) (Qh^T G).
        """
        c = self.Qc.T @ np.ones(self.Qc.shape[0])
        Gt = self.Qh.T @ design
        inv_D = 1.0 / self.D
        w = (c ** 2) @ inv_D
        Xt = self.rotate(X)
        u = c @ (Xt * inv_D)
        return GLSPieces(
            normal_matrix=Gt.T @ (w[:, None] * Gt),
            normal_rhs=Gt.T @ u,
            rotated_data=Xt,
            rotated_ones=c,
            rotated_design=Gt,
        )


class SchurSystem:
    """
    V = [[V11, U T^T], [T U^T, V22]] factored through V22 and W = V11 - U T^T V22^-1 T U^T.
    """

    def __init__(self, V11: np.ndarray, V22: np.ndarray, U: np.ndarray, T: np.ndarray):
        self.n1 = V11.shape[0]
        self.U = U
        self.T = T
        self.L22 = cholesky_with_jitter(V22, name="V22")
        self.Y = linalg.cho_solve((self.L22, True), T)
        W = V11 - U @ (T.T @ self.Y) @ U.T
        self.LW = cholesky_with_jitter(0.5 * (W + W.T), name="Schur complement W")

    @classmethod
    def from_blocks(cls, V11: np.ndarray, V12: np.ndarray, V22: np.ndarray) -> "SchurSystem":
        """Dense off-diagonal block."""
        return cls(V11, V22, V12, np.eye(V22.shape[0]))

    def logdet(self) -> float:
        return cholesky_logdet(self.LW) + cholesky_logdet(self.L22)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """V^-1 b by forward Schur substitution; ``b`` is a vector or a matrix of columns."""
        b1, b2 = b[:self.n1], b[self.n1:]
        y2 = linalg.cho_solve((self.L22, True), b2)
        z1 = linalg.cho_solve((self.LW, True), b1 - self.U @ (self.T.T @ y2))
        z2 = y2 - self.Y @ (self.U.T @ z1)
        return np.concatenate([z1, z2], axis=0)
