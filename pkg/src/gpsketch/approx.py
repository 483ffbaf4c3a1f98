"""Reduced-rank GP prior approximations and knot selection.

Four covariance approximations share one factored representation:

* ``sor``  - subset-of-regressors / predictive process on a knot set,
  Q = K_{f,*} K_{*,*}^-1 K_{*,f};
* ``fitc`` - sor plus the diagonal correction restoring exact marginal
  variances;
* ``rp``   - random-projection Nystrom approximation from a sketch;
* ``rm``   - rp plus the same diagonal correction.

Knot selection is either uniform random (PP1) or greedy pivoted partial
Cholesky (PP2); a knot set is exactly the special case of a projection
matrix whose rows are rows of the identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels, linalg
from .errors import (
    InvalidShape,
    NegativeVarianceDeficit,
    NotPositiveDefinite,
    SingularKnotMatrix,
)
from .kernels import KernelSpec
from .sketch import LowRankModel, ProjectionMatrix

# Deficit overshoot tolerance.  The triangular solve against a jittered,
# ill-conditioned knot block can inflate the approximate diagonal by
# roundoff amplified by the block's condition number, well past 1e-10.
_DEFICIT_TOL = 1e-6


@dataclass
class KnotSet:
    """Knot locations, as indices into the data or explicit coordinates."""

    indices: np.ndarray | None = None
    locations: np.ndarray | None = None

    def __post_init__(self):
        if (self.indices is None) == (self.locations is None):
            raise InvalidShape("provide exactly one of indices or locations")
        if self.indices is not None:
            self.indices = np.asarray(self.indices, dtype=int)
            if self.indices.size < 1:
                raise InvalidShape("need at least one knot")
            if np.unique(self.indices).size != self.indices.size:
                raise InvalidShape("knot indices must be distinct")

    @property
    def m(self) -> int:
        return self.indices.size if self.indices is not None else len(self.locations)

    def resolve(self, x: np.ndarray) -> np.ndarray:
        if self.locations is not None:
            return np.asarray(self.locations, dtype=float)
        if np.any(self.indices < 0) or np.any(self.indices >= x.shape[0]):
            raise InvalidShape("knot indices out of range")
        return x[self.indices]


@dataclass
class GpApproximation:
    """A reduced-rank prior in factored form, uniformly usable downstream.

    ``model`` always carries the eigenfactors (U, d2); for the corrected
    methods it also carries the diagonal restoration ``d_m``.  The kernel,
    locations, and projection are kept so cross-covariances at new
    locations can be formed.
    """

    method: str
    model: LowRankModel
    kernel: KernelSpec | None = None
    x: np.ndarray | None = None
    knots: KnotSet | None = None

    @property
    def d_m(self) -> np.ndarray | None:
        return self.model.d_m

    @property
    def rank(self) -> int:
        return self.model.rank

    def cov_dense(self, size_cap: int = 4000) -> np.ndarray:
        """Materialize the full approximate covariance (diagnostics only)."""
        if self.model.n > size_cap:
            raise InvalidShape(
                f"refusing to materialize {self.model.n}^2 covariance "
                f"(cap {size_cap})"
            )
        return self.model.dense()


def select_knots_random(n: int, m: int, seed: int = 0) -> KnotSet:
    """PP1: m knots drawn uniformly without replacement from n points."""
    if not 1 <= m <= n:
        raise InvalidShape(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    return KnotSet(indices=np.sort(rng.choice(n, size=m, replace=False)))


def select_knots_pivoted(k: np.ndarray, rank: int | None = None,
                         tol: float | None = None) -> KnotSet:
    """PP2: knots are the greedy pivots of the partial Cholesky of K."""
    pivots, _ = linalg.pivoted_partial_cholesky(k, rank=rank, tol=tol)
    if not pivots:
        raise InvalidShape("pivoted selection produced no knots")
    return KnotSet(indices=np.array(pivots))


def _knot_factor(spec: KernelSpec, x: np.ndarray, knots: KnotSet):
    """W (m x n) with Q = W^T W, via the jittered Cholesky L of K_{*,*}."""
    xs = knots.resolve(x)
    kss = kernels.gram(spec, xs)
    kfs = kernels.cross_gram(spec, x, xs)          # (n, m)
    try:
        lower = linalg.cholesky(kss)
    except NotPositiveDefinite as exc:
        raise SingularKnotMatrix(
            "knot covariance is singular; knots may be near-duplicates"
        ) from exc
    return scipy.linalg.solve_triangular(lower, kfs.T, lower=True), lower


def sor_cov(spec: KernelSpec, x, knots: KnotSet) -> np.ndarray:
    """Dense Q = K_{f,*} K_{*,*}^-1 K_{*,f} (test and study paths only)."""
    w, _ = _knot_factor(spec, kernels._as_points(x), knots)
    return w.T @ w


def sor_model(spec: KernelSpec, x, knots: KnotSet, *,
              correct_variance: bool = False) -> GpApproximation:
    """Factored subset-of-regressors model; FITC when ``correct_variance``.

    Never forms an n x n matrix: the Nystrom factor K_{f,*} L^-T is
    decomposed directly, so cost is O(n m^2).
    """
    x = kernels._as_points(x)
    w, lower = _knot_factor(spec, x, knots)        # (m, n), (m, m)
    u, d, vt = np.linalg.svd(w.T, full_matrices=False)
    phi = None
    if knots.indices is not None:
        rows = np.zeros((knots.m, x.shape[0]))
        rows[np.arange(knots.m), knots.indices] = 1.0
        phi = ProjectionMatrix(rows, "knot-permutation")
    model = LowRankModel(u, d * d, phi=phi, core_lower=lower, v=vt.T)
    approx = GpApproximation("sor", model, kernel=spec, x=x, knots=knots)
    if correct_variance:
        return fitc_correct(approx, np.full(x.shape[0], 1.0 / spec.theta2))
    return approx


def pp1_model(spec: KernelSpec, x, m: int, seed: int = 0, *,
              correct_variance: bool = False) -> GpApproximation:
    """Random-knot model with a single seeded redraw on singular knots."""
    x = kernels._as_points(x)
    try:
        return sor_model(spec, x, select_knots_random(x.shape[0], m, seed),
                         correct_variance=correct_variance)
    except SingularKnotMatrix:
        warnings.warn("singular knot set; redrawing once", stacklevel=2)
        return sor_model(spec, x, select_knots_random(x.shape[0], m, seed + 1),
                         correct_variance=correct_variance)


def variance_deficit(k_diag: np.ndarray, approx_diag: np.ndarray) -> np.ndarray:
    """Clipped diagonal deficit D_M = diag(K) - diag(Q), validated nonnegative."""
    k_diag = np.asarray(k_diag, dtype=float)
    deficit = k_diag - approx_diag
    tol = _DEFICIT_TOL * max(1.0, float(np.max(np.abs(k_diag))))
    if np.min(deficit) < -tol:
        raise NegativeVarianceDeficit(
            f"approximate variance exceeds exact by {-np.min(deficit):.3e}"
        )
    return np.maximum(deficit, 0.0)


def rm_correct(model: LowRankModel, k_diag: np.ndarray, *,
               kernel: KernelSpec | None = None,
               x: np.ndarray | None = None) -> GpApproximation:
    """Attach the diagonal variance restoration to a sketch model."""
    d_m = variance_deficit(k_diag, model.diag())
    corrected = LowRankModel(model.u, model.d2, phi=model.phi, d_m=d_m,
                             core_lower=model.core_lower, v=model.v)
    return GpApproximation("rm", corrected, kernel=kernel, x=x)


def fitc_correct(q, k_diag: np.ndarray) -> GpApproximation:
    """Diagonal-corrected model from a dense Q or an existing approximation."""
    if isinstance(q, GpApproximation):
        d_m = variance_deficit(k_diag, q.model.diag())
        model = LowRankModel(q.model.u, q.model.d2, phi=q.model.phi, d_m=d_m,
                             core_lower=q.model.core_lower, v=q.model.v)
        return GpApproximation("fitc", model, kernel=q.kernel, x=q.x,
                               knots=q.knots)
    q = linalg.as_symmetric(q)
    d_m = variance_deficit(k_diag, np.diag(q))
    pair = linalg.eig_sym(q)
    keep = pair.d > max(pair.d[0], 0.0) * 1e-14
    model = LowRankModel(pair.u[:, keep], np.maximum(pair.d[keep], 0.0), d_m=d_m)
    return GpApproximation("fitc", model)


def rp_cov(model: LowRankModel, size_cap: int = 4000) -> np.ndarray:
    """Dense materialization of the projection approximation (tests only)."""
    if model.n > size_cap:
        raise InvalidShape(f"materialization over cap ({model.n} > {size_cap})")
    return (model.u * model.d2) @ model.u.T


def rp_cross(model: LowRankModel, spec: KernelSpec, x, xnew) -> np.ndarray:
    """Approximate covariance between a new point and the training set.

    Evaluates (Phi k_new)^T (Phi K Phi^T)^-1 Phi k_f for every training
    point at O(n m) cost using the stored factor: the vector equals
    C B^-1 Phi k_new with C = U D V^T.
    """
    if model.phi is None or model.core_lower is None or model.v is None:
        raise InvalidShape("model lacks the projection factors for cross terms")
    kx = kernels.cross_cov(spec, xnew, x)          # (n,)
    w = scipy.linalg.solve_triangular(model.core_lower, model.phi.phi @ kx,
                                      lower=True)
    return model.u @ (np.sqrt(model.d2) * (model.v.T @ w))
