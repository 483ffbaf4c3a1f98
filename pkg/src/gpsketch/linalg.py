"""Dense symmetric/positive-definite linear algebra primitives.

Factorizations, norms, condition numbers, and solvers for
diagonal-plus-low-rank matrices that never form an n x n inverse.
Everything here is pure: inputs are not modified, outputs are fresh
arrays, and seeded operations are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NotPositiveDefinite,
    SingularMatrix,
)

# Cholesky pivots below PIVOT_FLOOR * max(diag) trigger one jittered retry
# with JITTER_SCALE * mean(diag) added to the diagonal.
PIVOT_FLOOR = 1e-12
JITTER_SCALE = 1e-10

_SYM_RTOL = 1e-12


def as_symmetric(a: np.ndarray, rtol: float = _SYM_RTOL) -> np.ndarray:
    """Validate that ``a`` is square and symmetric, return (A + A^T)/2.

    Symmetrizing before factorization guards against roundoff accumulated
    while assembling Gram matrices.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale > 0 and np.max(np.abs(a - a.T)) > rtol * scale * a.shape[0]:
        raise DimensionMismatch("matrix is not symmetric within tolerance")
    return (a + a.T) / 2.0


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular B with B B^T = A, with a one-shot jitter retry.

    A pivot below ``PIVOT_FLOOR * max(diag)`` counts as a failure; the
    retry adds ``JITTER_SCALE * mean(diag)`` to the diagonal once.  A
    second violation raises :class:`NotPositiveDefinite`, signalling the
    caller to reduce rank instead.
    """
    a = as_symmetric(a)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    d = np.diag(a)
    floor = PIVOT_FLOOR * np.max(d) if np.max(d) > 0 else 0.0

    def attempt(mat):
        try:
            b = np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            return None
        # the Cholesky pivots are the squared diagonal entries of B
        if np.min(np.diag(b)) ** 2 <= floor:
            return None
        return b

    b = attempt(a)
    if b is not None:
        return b
    jitter = JITTER_SCALE * float(np.mean(d))
    b = attempt(a + jitter * np.eye(n))
    if b is not None:
        return b
    raise NotPositiveDefinite(
        f"Cholesky pivot at or below floor {floor:.3e} even after jitter {jitter:.3e}"
    )


@dataclass
class PartialCholesky:
    """Rank-k pivoted factor: K ~ factor @ factor.T on the chosen pivots."""

    pivots: list[int]
    factor: np.ndarray          # (n, k)
    resid_diag: np.ndarray      # residual diagonal after the last pivot
    achieved_fro: float | None  # Frobenius residual, when tracked

    @property
    def rank(self) -> int:
        return len(self.pivots)


def partial_cholesky(
    k: np.ndarray,
    *,
    rank: int | None = None,
    diag_tol: float | None = None,
    trace_tol: float | None = None,
    fro_tol: float | None = None,
    pivot_order=None,
    track_fro: bool = False,
) -> PartialCholesky:
    """Partial Cholesky factorization of a PSD matrix with flexible stopping.

    Pivots greedily on the largest residual diagonal (ties broken by lowest
    index) unless an explicit ``pivot_order`` is given.  Stops at the first
    satisfied rule among: ``rank`` reached, max residual diagonal below
    ``diag_tol``, residual trace below ``trace_tol``, or exact Frobenius
    residual below ``fro_tol``.  The trace is a free byproduct of the
    factorization and, for PSD residuals, upper-bounds the Frobenius norm,
    so ``trace_tol`` acts as a cheap certificate for a Frobenius target.
    """
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    if rank is None and diag_tol is None and trace_tol is None and fro_tol is None:
        rank = n
    max_rank = n if rank is None else min(rank, n)

    track_fro = track_fro or fro_tol is not None
    diag = np.diag(k).copy()
    cols: list[np.ndarray] = []
    pivots: list[int] = []
    order_iter = iter(pivot_order) if pivot_order is not None else None

    norm_k2 = float(np.sum(k * k)) if track_fro else 0.0
    tr_kgg = 0.0
    norm_gg2 = 0.0
    err2 = norm_k2

    def achieved():
        return float(np.sqrt(max(err2, 0.0))) if track_fro else None

    while len(pivots) < max_rank:
        if diag_tol is not None and np.max(diag) < diag_tol:
            break
        if trace_tol is not None and float(np.sum(diag)) < trace_tol:
            break
        if fro_tol is not None and np.sqrt(max(err2, 0.0)) < fro_tol:
            break
        if order_iter is not None:
            try:
                p = int(next(order_iter))
            except StopIteration:
                break
            if diag[p] <= 0.0:
                continue
        else:
            p = int(np.argmax(diag))
            if diag[p] <= 0.0:
                break
        g = k[:, p].copy()
        for c in cols:
            g -= c * c[p]
        g /= np.sqrt(diag[p])
        pivots.append(p)
        diag = np.maximum(diag - g * g, 0.0)
        if track_fro:
            tr_kgg += float(g @ (k @ g))
            cross2 = sum(float(c @ g) ** 2 for c in cols)
            norm_gg2 += 2.0 * cross2 + float(g @ g) ** 2
            err2 = norm_k2 - 2.0 * tr_kgg + norm_gg2
        cols.append(g)

    factor = np.column_stack(cols) if cols else np.zeros((n, 0))
    return PartialCholesky(pivots, factor, diag, achieved())


def pivoted_partial_cholesky(a: np.ndarray, rank: int | None = None,
                             tol: float | None = None):
    """Greedy max-residual-diagonal partial Cholesky.

    Stops at ``rank`` columns or once the max residual diagonal drops
    below ``tol``, whichever comes first.  Returns ``(pivots, factor)``;
    rank 0 is a valid result when ``tol`` exceeds the largest diagonal.
    """
    res = partial_cholesky(as_symmetric(a), rank=rank, diag_tol=tol)
    return res.pivots, res.factor


@dataclass
class SpectralPair:
    """Eigenvector block U (columns orthonormal) with eigenvalues d, nonincreasing."""

    u: np.ndarray
    d: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.d) @ self.u.T


def eig_sym(a: np.ndarray) -> SpectralPair:
    """Full symmetric eigendecomposition, eigenvalues sorted nonincreasing.

    Thin wrapper over the LAPACK symmetric solver; intended for small
    matrices and as a test oracle.  Indefinite inputs yield negative
    trailing eigenvalues.
    """
    a = as_symmetric(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return SpectralPair(v[:, ::-1].copy(), w[::-1].copy())


def best_rank_m(a: np.ndarray, m: int) -> np.ndarray:
    """Optimal rank-m approximation (truncated eigendecomposition)."""
    a = as_symmetric(a)
    n = a.shape[0]
    if not 1 <= m <= n:
        raise DimensionMismatch(f"rank m={m} out of range for n={n}")
    if m == n:
        return a
    pair = eig_sym(a)
    u = pair.u[:, :m]
    return (u * pair.d[:m]) @ u.T


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a), ord="fro"))


def spectral_norm(a: np.ndarray, *, dense_cutoff: int = 400) -> float:
    """Largest |eigenvalue| of a symmetric matrix.

    Dense solve below ``dense_cutoff``; Lanczos (deterministic start
    vector) above it, which handles the tightly clustered spectra of
    smooth-kernel residuals better than plain power iteration.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        return 0.0
    if n <= dense_cutoff:
        w = np.linalg.eigvalsh((a + a.T) / 2.0)
        return float(max(abs(w[0]), abs(w[-1])))
    v0 = np.cos(np.arange(n, dtype=float))
    try:
        w = scipy.sparse.linalg.eigsh(
            (a + a.T) / 2.0, k=1, which="LM", v0=v0, tol=1e-9,
            return_eigenvectors=False,
        )
        return float(abs(w[0]))
    except scipy.sparse.linalg.ArpackError as exc:  # pragma: no cover
        raise ConvergenceFailure(str(exc)) from exc


def norms(a: np.ndarray) -> tuple[float, float]:
    """(Frobenius, spectral) norms of a symmetric matrix."""
    return frobenius_norm(a), spectral_norm(a)


def condition_number(a: np.ndarray) -> float:
    """Ratio of the largest to smallest eigenvalue of a PD matrix.

    Returns ``inf`` when the smallest eigenvalue is indistinguishable
    from zero at double precision (the condition number saturates);
    raises :class:`SingularMatrix` when it is negative beyond roundoff.
    """
    a = as_symmetric(a)
    w = np.linalg.eigvalsh(a)
    wmax, wmin = float(w[-1]), float(w[0])
    if wmax <= 0:
        raise SingularMatrix("matrix has no positive eigenvalues")
    # eigenvalue roundoff for severely rank-deficient PD matrices can push
    # the smallest eigenvalue slightly negative; treat that as saturation
    roundoff = 100.0 * a.shape[0] * np.finfo(float).eps * wmax
    if wmin <= 0:
        if wmin < -roundoff:
            raise SingularMatrix(
                f"smallest eigenvalue {wmin:.3e} is negative beyond roundoff"
            )
        return float("inf")
    return wmax / wmin


@dataclass
class WoodburyInverse:
    """(U diag(d2) U^T + sigma2 I)^-1 in factored form, U column-orthonormal.

    ``apply`` and ``logdet`` cost O(nm) after construction; the dense
    inverse is never formed.
    """

    u: np.ndarray
    d2: np.ndarray
    sigma2: float
    _gain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.d2 = np.asarray(self.d2, dtype=float)
        if self.u.ndim != 2 or self.d2.ndim != 1 or self.u.shape[1] != self.d2.size:
            raise DimensionMismatch("U must be (n, m) with d2 of length m")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if np.any(self.d2 < 0):
            raise ValueError("d2 must be nonnegative")
        m = self.u.shape[1]
        if m > 0:
            gram = self.u.T @ self.u
            if np.max(np.abs(gram - np.eye(m))) > 1e-8:
                raise ValueError("U columns are not orthonormal")
        # Sigma^-1 = I/s2 - U diag(d2 / (d2 + s2)) U^T / s2
        self._gain = self.d2 / (self.d2 + self.sigma2)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise DimensionMismatch(f"vector length {v.shape[0]} != n={self.n}")
        return v

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Inverse-matrix action (U diag(d2) U^T + sigma2 I)^-1 v."""
        v = self._check(v)
        coeff = self._gain[:, None] * (self.u.T @ v) if v.ndim == 2 else \
            self._gain * (self.u.T @ v)
        return (v - self.u @ coeff) / self.sigma2

    def forward(self, v: np.ndarray) -> np.ndarray:
        """Forward action (U diag(d2) U^T + sigma2 I) v."""
        v = self._check(v)
        coeff = self.d2[:, None] * (self.u.T @ v) if v.ndim == 2 else \
            self.d2 * (self.u.T @ v)
        return self.u @ coeff + self.sigma2 * v

    def logdet(self) -> float:
        """log det(U diag(d2) U^T + sigma2 I) via the determinant lemma."""
        n, m = self.u.shape
        return float((n - m) * np.log(self.sigma2) + np.sum(np.log(self.d2 + self.sigma2)))


def woodbury_inverse(u: np.ndarray, d2: np.ndarray, sigma2: float) -> WoodburyInverse:
    return WoodburyInverse(u, d2, sigma2)


class DiagLowRank:
    """Solver for A = diag(lam) + U diag(e) U^T with lam > 0, e >= 0.

    U need not be orthonormal.  Uses the symmetric capacitance form
    I + E^(1/2) U^T diag(lam)^-1 U E^(1/2), which stays positive definite
    even when entries of ``e`` vanish.
    """

    def __init__(self, lam: np.ndarray, u: np.ndarray, e: np.ndarray):
        lam = np.asarray(lam, dtype=float)
        u = np.asarray(u, dtype=float)
        e = np.asarray(e, dtype=float)
        if u.ndim != 2 or lam.ndim != 1 or e.ndim != 1:
            raise DimensionMismatch("expected lam (n,), u (n, m), e (m,)")
        if u.shape[0] != lam.size or u.shape[1] != e.size:
            raise DimensionMismatch(
                f"inconsistent shapes lam {lam.shape}, u {u.shape}, e {e.shape}"
            )
        if np.any(lam <= 0):
            raise SingularMatrix("diagonal part must be strictly positive")
        if np.any(e < 0):
            raise ValueError("low-rank weights must be nonnegative")
        self.lam = lam
        self.u = u
        self.e = e
        root = np.sqrt(e)
        self._w = (u / lam[:, None]) * root          # diag(lam)^-1 U E^(1/2)
        cap = np.eye(e.size) + (root[:, None] * (u.T @ self._w))
        cap = (cap + cap.T) / 2.0
        self._chol = np.linalg.cholesky(cap)

    @property
    def n(self) -> int:
        return self.lam.size

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise DimensionMismatch(f"operand length {v.shape[0]} != n={self.n}")
        return v

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = self._check(v)
        coeff = self.e[:, None] * (self.u.T @ v) if v.ndim == 2 else \
            self.e * (self.u.T @ v)
        diag = self.lam[:, None] * v if v.ndim == 2 else self.lam * v
        return diag + self.u @ coeff

    def solve(self, v: np.ndarray) -> np.ndarray:
        """A^-1 v for a vector or a stack of columns.

        Non-finite inputs propagate to the output rather than raising, so
        samplers can detect and report bad states themselves.
        """
        v = self._check(v)
        wv = self._w.T @ v
        core = scipy.linalg.cho_solve((self._chol, True), wv,
                                      check_finite=False)
        diag = v / self.lam[:, None] if v.ndim == 2 else v / self.lam
        return diag - self._w @ core

    def quad(self, v: np.ndarray) -> float:
        """v^T A^-1 v without forming the solve result."""
        v = self._check(v)
        if v.ndim != 1:
            raise DimensionMismatch("quad expects a single vector")
        half = scipy.linalg.solve_triangular(self._chol, self._w.T @ v,
                                             lower=True, check_finite=False)
        return float(v @ (v / self.lam) - half @ half)

    def logdet(self) -> float:
        return float(np.sum(np.log(self.lam)) + 2.0 * np.sum(np.log(np.diag(self._chol))))
