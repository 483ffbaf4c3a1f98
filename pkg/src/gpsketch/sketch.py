"""Randomized range finding and Nystrom spectral approximation.

Two entry points: :func:`nystrom_fixed_rank` builds a rank-m factorization
K ~ U diag(d2) U^T from a Johnson-Lindenstrauss sketch of the range of K,
and :func:`adaptive_rangefinder` grows an orthonormal row basis until
random probes of the residual certify a target error.  Both are
deterministic given their seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg
from .errors import InvalidShape, NotPositiveDefinite, RankDeficientSketch

# Probe threshold factor sqrt(pi)/(10*sqrt(2)) makes the rangefinder's stop
# test certify the spectral norm of the residual with failure probability
# n/10^r.  The default mode tests probes against the target itself, which
# is calibrated for Frobenius-norm targets: probe norms are unbiased
# estimators of the Frobenius residual, so requiring the max of r of them
# below the target stops with the residual a max-statistic margin under it.
SPECTRAL_CERTIFICATE_FACTOR = math.sqrt(math.pi) / (10.0 * math.sqrt(2.0))


@dataclass
class JlMatrix:
    """Random embedding, stored row-major as the (r, n) transpose of Omega."""

    matrix: np.ndarray
    distribution: str
    seed: int

    @property
    def omega(self) -> np.ndarray:
        """The (n, r) sketch matrix applied as K @ omega."""
        return self.matrix.T


def draw_jl(n: int, r: int, distribution: str = "gaussian", seed: int = 0) -> JlMatrix:
    """Draw an (r, n) Johnson-Lindenstrauss matrix, entries scaled by 1/sqrt(r).

    ``distribution`` is "gaussian" (iid standard normal) or "rademacher"
    (iid +-1); identical seeds reproduce identical matrices.
    """
    if r < 1 or n < r:
        raise InvalidShape(f"need 1 <= r <= n, got r={r}, n={n}")
    rng = np.random.default_rng(seed)
    if distribution == "gaussian":
        m = rng.standard_normal((r, n))
    elif distribution == "rademacher":
        m = rng.integers(0, 2, size=(r, n)) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    return JlMatrix(m / math.sqrt(r), distribution, seed)


@dataclass
class ProjectionMatrix:
    """Row basis Phi (m x n) used to compress the process.

    Sketch-produced rows are orthonormal; knot-permutation rows are rows of
    the identity.  ``exhausted`` flags an adaptive search that hit full rank
    without meeting its target.
    """

    phi: np.ndarray
    provenance: str
    exhausted: bool = False

    @property
    def rank(self) -> int:
        return self.phi.shape[0]


@dataclass
class LowRankModel:
    """Factored PSD approximation K ~ U diag(d2) U^T.

    ``core_lower`` is the Cholesky factor of Phi K Phi^T and ``v`` the right
    singular block of the Nystrom factor; both are kept so cross-covariances
    at new locations can be evaluated without re-sketching.  ``d_m`` holds
    the diagonal variance correction when one has been attached.
    """

    u: np.ndarray
    d2: np.ndarray
    phi: ProjectionMatrix | None = None
    d_m: np.ndarray | None = None
    core_lower: np.ndarray | None = None
    v: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def rank(self) -> int:
        return self.d2.size

    def dense(self) -> np.ndarray:
        """Materialize U diag(d2) U^T.  Diagnostic use only: O(n^2) memory."""
        q = (self.u * self.d2) @ self.u.T
        if self.d_m is not None:
            q = q + np.diag(self.d_m)
        return q

    def diag(self) -> np.ndarray:
        d = np.einsum("ij,j,ij->i", self.u, self.d2, self.u)
        if self.d_m is not None:
            d = d + self.d_m
        return d


def nystrom_from_projection(k: np.ndarray, phi: ProjectionMatrix) -> LowRankModel:
    """Steps shared by every projection: factor (Phi K)^T (Phi K Phi^T)^-1 (Phi K).

    Forms the core Phi K Phi^T, Cholesky-factors it (with the jitter
    policy), back-solves the Nystrom factor C = K Phi^T B^-T, and takes its
    SVD so the result is an eigendecomposition of the approximation.  When
    the core is numerically rank deficient even after jitter, the rank is
    shrunk to the core's numerical rank with a warning.
    """
    p = phi.phi
    kp = k @ p.T                      # (n, m)
    core = p @ kp                     # (m, m)
    core = (core + core.T) / 2.0
    try:
        b = linalg.cholesky(core)
    except NotPositiveDefinite:
        w, vecs = np.linalg.eigh(core)
        keep = w > linalg.PIVOT_FLOOR * max(w[-1], 0.0)
        rank = int(np.sum(keep))
        if rank == 0:
            raise RankDeficientSketch("sketched core matrix has numerical rank 0")
        warnings.warn(
            f"sketched core rank deficient; shrinking rank {p.shape[0]} -> {rank}",
            stacklevel=2,
        )
        sub = ProjectionMatrix(vecs[:, -rank:].T @ p, phi.provenance, phi.exhausted)
        return nystrom_from_projection(k, sub)
    c = scipy.linalg.solve_triangular(b, kp.T, lower=True).T   # K Phi^T B^-T
    u, d, vt = np.linalg.svd(c, full_matrices=False)
    return LowRankModel(u, d * d, phi=phi, core_lower=b, v=vt.T)


def nystrom_fixed_rank(
    k: np.ndarray,
    m: int,
    r: int | None = None,
    seed: int = 0,
    distribution: str = "gaussian",
) -> LowRankModel:
    """Rank-m Nystrom approximation of a PSD matrix from a random sketch.

    Draws an n x r JL matrix (r defaults to m), takes the top-m left
    directions of K Omega via the r x r Gram eigendecomposition (with a QR
    polish for orthonormality), and runs the Nystrom factorization on the
    resulting projection.
    """
    k = linalg.as_symmetric(k)
    n = k.shape[0]
    if r is None:
        r = m
    if not 1 <= m <= r <= n:
        raise InvalidShape(f"need 1 <= m <= r <= n, got m={m}, r={r}, n={n}")
    jl = draw_jl(n, r, distribution, seed)
    y = k @ jl.omega                                # (n, r)
    s, w = np.linalg.eigh(y.T @ y)
    order = np.argsort(s)[::-1][:m]
    basis, _ = np.linalg.qr(y @ w[:, order])
    phi = ProjectionMatrix(basis.T, "nystrom-fixed-rank")
    return nystrom_from_projection(k, phi)


def range_residual(k: np.ndarray, phi: ProjectionMatrix) -> np.ndarray:
    """K - Phi^T Phi K, the part of K outside the projected range."""
    return k - phi.phi.T @ (phi.phi @ k)


def default_probe_count(n: int) -> int:
    """Probes r with n/10^r <= 0.1, i.e. a 0.9 success guarantee."""
    return max(1, math.ceil(math.log10(10.0 * n)))


def adaptive_rangefinder(
    k: np.ndarray,
    eps: float,
    r: int | None = None,
    seed: int = 0,
    *,
    threshold: str = "target",
    max_rank: int | None = None,
) -> ProjectionMatrix:
    """Grow an orthonormal row basis Phi until probes certify the target.

    Maintains r Gaussian probes of the residual (I - Phi^T Phi) K and stops
    once the largest probe statistic falls below the threshold; otherwise
    the leading probe is re-orthogonalized against the current basis,
    normalized, and appended as a new row, a fresh probe is drawn, and the
    pending probes are deflated against the new row for stability.

    ``threshold="target"`` tests probe 2-norms against ``eps`` directly
    (probe norms estimate the Frobenius residual, so this stops with the
    Frobenius error a max-of-r margin below the target).
    ``threshold="spectral"`` scales by sqrt(pi)/(10 sqrt(2)), the
    conservative certificate that the spectral residual is below ``eps``
    with probability 1 - n/10^r; it typically overshoots the rank needed
    for a Frobenius target.
    """
    k = linalg.as_symmetric(k)
    n = k.shape[0]
    if eps <= 0:
        raise ValueError("eps must be positive")
    if r is None:
        r = default_probe_count(n)
    if r < 1:
        raise InvalidShape("need at least one probe")
    if max_rank is None:
        max_rank = n
    if threshold == "target":
        cut = eps
    elif threshold == "spectral":
        cut = eps * SPECTRAL_CERTIFICATE_FACTOR
    else:
        raise ValueError(f"unknown threshold mode {threshold!r}")

    rng = np.random.default_rng(seed)
    rows: list[np.ndarray] = []
    probes = [k @ rng.standard_normal(n) for _ in range(r)]

    def deflate(vec):
        out = vec.copy()
        for row in rows:
            out -= row * (row @ out)
        return out

    while True:
        if max(np.linalg.norm(p) for p in probes) < cut:
            return ProjectionMatrix(
                np.array(rows) if rows else np.zeros((0, n)), "adaptive"
            )
        if len(rows) >= max_rank:
            return ProjectionMatrix(np.array(rows), "adaptive", exhausted=True)
        lead = deflate(probes.pop(0))
        norm = np.linalg.norm(lead)
        if norm == 0.0:
            # probe annihilated by the projection; replace it and move on
            probes.append(deflate(k @ rng.standard_normal(n)))
            continue
        row = lead / norm
        rows.append(row)
        fresh = deflate(k @ rng.standard_normal(n))
        probes.append(fresh)
        for i in range(len(probes) - 1):
            probes[i] = probes[i] - row * (row @ probes[i])


@dataclass
class SuccessRate:
    """Empirical quasi-optimality frequencies over repeated sketches."""

    frobenius: float
    spectral: float
    trials: int


def fixed_rank_success_rate(
    k: np.ndarray, m: int, eps: float, trials: int, seed: int = 0
) -> SuccessRate:
    """Fraction of sketches with error within (1 + eps) of the best rank m.

    Uses sketch size r = floor(m / eps) and compares ||K - K_tr|| against
    (1 + eps) * ||K - K_m||_F in both the Frobenius and spectral norms,
    reporting both frequencies.
    """
    if trials < 1:
        raise InvalidShape("need at least one trial")
    k = linalg.as_symmetric(k)
    r = min(int(m / eps), k.shape[0])
    km = linalg.best_rank_m(k, m)
    target = (1.0 + eps) * linalg.frobenius_norm(k - km)
    floor = 1e-12 * linalg.frobenius_norm(k)
    ok_f = ok_2 = 0
    root = np.random.default_rng(seed)
    for t in range(trials):
        model = nystrom_fixed_rank(k, m, r, seed=int(root.integers(2**63)))
        resid = k - model.dense()
        ok_f += linalg.frobenius_norm(resid) <= target + floor
        ok_2 += linalg.spectral_norm(resid) <= target + floor
    return SuccessRate(ok_f / trials, ok_2 / trials, trials)
