"""
Reference discrepancies: exact (V-statistic) MMD, mean-feature MMD and point-wise MSE
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.spatial.distance import cdist

from charfn import empirical_cf
from errors import ArgumentError, ShapeError

KERNEL_KINDS = ("gaussian", "linear")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel used by mmd_squared; bandwidth only matters for the gaussian kind"""

    kind: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ArgumentError(f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if not self.bandwidth > 0:
            raise ArgumentError(f"bandwidth must be > 0, got {self.bandwidth}")

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return a @ b.T
        return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * self.bandwidth ** 2))


def _check_same_dim(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    return x, y


def mmd_squared(x: np.ndarray, y: np.ndarray, kernel: KernelSpec = KernelSpec()) -> float:
    """
    Biased (V-statistic) squared MMD: mean K(X,X) + mean K(Y,Y) - 2 mean K(X,Y)

    Diagonal terms are included, which makes the estimate match the
    random-Fourier-feature identity exactly. Cancellation between the three
    means can go a few ulps below zero; the result is clamped at 0.
    """
    x, y = _check_same_dim(x, y)
    value = kernel(x, x).mean() + kernel(y, y).mean() - 2.0 * kernel(x, y).mean()
    return max(float(value), 0.0)


def mean_feature_mmd(x_feat: np.ndarray, y_feat: np.ndarray) -> float:
    """Squared distance between the column means of two feature batches"""
    x_feat, y_feat = _check_same_dim(x_feat, y_feat)
    gap = x_feat.mean(axis=0) - y_feat.mean(axis=0)
    return float(gap @ gap)


def mse_pointwise(x_feat: np.ndarray, y_feat: np.ndarray) -> float:
    """Mean over paired rows of the squared Euclidean distance"""
    x_feat, y_feat = _check_same_dim(x_feat, y_feat)
    if x_feat.shape[0] != y_feat.shape[0]:
        raise ShapeError(f"paired batches need equal row counts: {x_feat.shape[0]} vs {y_feat.shape[0]}")
    return float(np.mean(np.sum((x_feat - y_feat) ** 2, axis=1)))


def cf_mmd_estimate(x: np.ndarray, y: np.ndarray, freqs: np.ndarray) -> Tuple[float, float]:
    """
    Monte-Carlo estimate of E_t |Phi_X(t) - Phi_Y(t)|^2 over the given frequencies

    With t ~ N(0, I / h^2) this estimates the gaussian-kernel V-statistic MMD of
    bandwidth h.

    Returns:
        (mean, standard error) of the per-frequency squared CF gaps
    """
    x, y = _check_same_dim(x, y)
    gaps = np.abs(empirical_cf(x, freqs).as_complex() - empirical_cf(y, freqs).as_complex()) ** 2
    stderr = gaps.std(ddof=1) / np.sqrt(gaps.size) if gaps.size > 1 else 0.0
    return float(gaps.mean()), float(stderr)
