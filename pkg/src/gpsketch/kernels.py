"""Squared-exponential covariance kernel and Gram matrix assembly.

The kernel is k(x, z) = (1/theta2) * exp(-theta1 * ||x - z||^2), with
``theta1`` the range parameter (per squared-distance unit) and ``theta2``
the inverse scale.  Rescaling theta2 scales the whole Gram matrix by a
constant and leaves its eigenvectors unchanged, which the sampler relies
on to reuse precomputed factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel parameters."""

    theta1: float
    theta2: float = 1.0

    def __post_init__(self):
        if self.theta1 < 0:
            raise ValueError(f"theta1 must be >= 0, got {self.theta1}")
        if self.theta2 <= 0:
            raise ValueError(f"theta2 must be > 0, got {self.theta2}")

    def with_theta2(self, theta2: float) -> "KernelSpec":
        return KernelSpec(self.theta1, theta2)


def _as_points(x) -> np.ndarray:
    """Coerce to an (n, d) array of locations; scalars and 1-D become d=1."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(-1, 1)
    if x.ndim == 2:
        return x
    raise DimensionMismatch(f"locations must be at most 2-D, got shape {x.shape}")


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """Evaluate k(x, z) for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
    if x.shape != z.shape:
        raise DimensionMismatch(f"point dimensions differ: {x.shape} vs {z.shape}")
    return float(np.exp(-spec.theta1 * np.sum((x - z) ** 2)) / spec.theta2)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.sum(a * a, axis=1)
    nb = np.sum(b * b, axis=1)
    d = na[:, None] + nb[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def gram(spec: KernelSpec, x) -> np.ndarray:
    """Symmetric PSD Gram matrix of the kernel over locations ``x``."""
    pts = _as_points(x)
    if pts.shape[0] == 0:
        raise DimensionMismatch("need at least one location")
    g = np.exp(-spec.theta1 * _sq_dists(pts, pts)) / spec.theta2
    g = (g + g.T) / 2.0
    np.fill_diagonal(g, 1.0 / spec.theta2)
    return g


def cross_gram(spec: KernelSpec, x, z) -> np.ndarray:
    """Rectangular covariance block between location sets ``x`` and ``z``."""
    a, b = _as_points(x), _as_points(z)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(
            f"location dimensions differ: {a.shape[1]} vs {b.shape[1]}"
        )
    return np.exp(-spec.theta1 * _sq_dists(a, b)) / spec.theta2


def cross_cov(spec: KernelSpec, x, xs) -> np.ndarray:
    """Covariance vector {k(x, x_1), ..., k(x, x_n)} for one point x."""
    pt = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return cross_gram(spec, pt, xs).ravel()


@dataclass
class Dataset:
    """Input locations with responses and an optional train/test partition."""

    x: np.ndarray
    y: np.ndarray
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = _as_points(self.x)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.x.shape[0] != self.y.size:
            raise DimensionMismatch(
                f"{self.x.shape[0]} locations but {self.y.size} responses"
            )
        if (self.train_idx is None) != (self.test_idx is None):
            raise ValueError("provide both train_idx and test_idx or neither")
        if self.train_idx is not None:
            self.train_idx = np.asarray(self.train_idx, dtype=int)
            self.test_idx = np.asarray(self.test_idx, dtype=int)
            combined = np.concatenate([self.train_idx, self.test_idx])
            if combined.size != self.y.size or \
                    np.unique(combined).size != self.y.size:
                raise ValueError("partition must be disjoint and cover all points")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        if self.train_idx is None:
            return np.arange(self.n), np.zeros(0, dtype=int)
        return self.train_idx, self.test_idx
