"""Bayesian inference for the reduced-rank GP regression model.

The model is y = g + noise with g ~ N(0, Q), Q the diagonal-corrected
low-rank prior covariance, noise precision tau ~ Gamma(a1, b1), inverse
scale theta2 ~ Gamma(a2, b2), and range theta1 uniform on a discrete
grid.  All Gamma distributions are parametrized with mean a/b.

Every grid point's projection is computed once at the reference scale
theta2 = 1; a change of theta2 rescales the factors by a scalar and never
re-sketches.  All covariance solves go through the diagonal-plus-low-rank
form, so one sweep costs O(t n m) instead of O(n^3).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import approx as approx_mod
from . import kernels, linalg, sketch
from .approx import GpApproximation
from .errors import (
    ChainTooShort,
    DimensionMismatch,
    InvalidShape,
    NonFiniteLikelihood,
    NonFiniteState,
)
from .kernels import Dataset, KernelSpec

# Diagonal floor applied to the variance correction before it is used as
# the diagonal block of a solver; within the correction's own tolerance.
_DM_FLOOR = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    """Conjugate priors: tau ~ Ga(a1, b1), theta2 ~ Ga(a2, b2), theta1 on a grid."""

    a1: float = 1.0
    b1: float = 10.0
    a2: float = 2.0
    b2: float = 20.0
    theta1_grid: np.ndarray = field(default_factory=lambda: default_theta1_grid())

    def __post_init__(self):
        if min(self.a1, self.b1, self.a2, self.b2) <= 0:
            raise ValueError("gamma hyperparameters must be positive")
        grid = np.asarray(self.theta1_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("theta1 grid must be nonempty, positive, increasing")
        object.__setattr__(self, "theta1_grid", grid)


def default_theta1_grid(points: int = 2000, upper: float = 2.0) -> np.ndarray:
    """Equispaced grid on (0, upper]; the left endpoint is excluded to keep
    every grid kernel nondegenerate."""
    return np.linspace(0.0, upper, points + 1)[1:]


@dataclass(frozen=True)
class ApproxConfig:
    """How to build the per-grid-point covariance approximation.

    ``method`` is "rp" (random-projection sketch), "pp1" (random knots) or
    "pp2" (pivoted knots).  Exactly one of ``rank`` (fixed-rank mode) and
    ``eps`` (target-error mode) must be set, unless ``ranks`` pins an
    explicit per-grid-point rank budget (used for paired comparisons).
    """

    method: str = "rp"
    rank: int | None = None
    eps: float | None = None
    ranks: tuple[int, ...] | None = None
    probe_threshold: str = "target"

    def __post_init__(self):
        if self.method not in ("rp", "pp1", "pp2"):
            raise ValueError(f"unknown method {self.method!r}")
        chosen = sum(x is not None for x in (self.rank, self.eps, self.ranks))
        if chosen != 1:
            raise ValueError("set exactly one of rank, eps, or ranks")


@dataclass
class PrecomputedGrid:
    """Reference-scale (theta2 = 1) factors for every theta1 grid point.

    ``inv_lam`` (t, n) and ``whitened`` (t, n, max_rank) hold the stacked
    quantities needed to evaluate g' R_h^-1 g for every grid point in two
    BLAS calls per sweep; rank-deficient slots are zero-padded, which
    contributes nothing to the quadratic form.
    """

    theta1_grid: np.ndarray
    x: np.ndarray
    config: ApproxConfig
    models: list[GpApproximation]
    solvers: list[linalg.DiagLowRank]
    logdets: np.ndarray
    ranks: np.ndarray
    inv_lam: np.ndarray
    whitened: np.ndarray

    @property
    def size(self) -> int:
        return self.theta1_grid.size

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def quads(self, g: np.ndarray) -> np.ndarray:
        """g' R_h^-1 g for every grid point h, vectorized."""
        diag_part = self.inv_lam @ (g * g)
        half = np.einsum("tnm,n->tm", self.whitened, g)
        return diag_part - np.einsum("tm,tm->t", half, half)


def _reference_model(k: np.ndarray, x, spec: KernelSpec, config: ApproxConfig,
                     rank_override: int | None, seed: int) -> GpApproximation:
    n = k.shape[0]
    rank = rank_override if rank_override is not None else config.rank
    if config.method == "rp":
        if rank is not None:
            model = sketch.nystrom_fixed_rank(k, min(rank, n), seed=seed)
        else:
            phi = sketch.adaptive_rangefinder(
                k, config.eps, seed=seed, threshold=config.probe_threshold)
            if phi.rank == 0:
                phi = sketch.ProjectionMatrix(np.zeros((0, n)), "adaptive")
                model = sketch.LowRankModel(np.zeros((n, 0)), np.zeros(0), phi=phi)
            else:
                model = sketch.nystrom_from_projection(k, phi)
        return approx_mod.rm_correct(model, np.diag(k), kernel=spec, x=x)
    if config.method == "pp1":
        if rank is None:
            order = np.random.default_rng(seed).permutation(n)
            res = linalg.partial_cholesky(k, trace_tol=config.eps,
                                          pivot_order=order)
            rank = max(res.rank, 1)
        knots = approx_mod.select_knots_random(n, min(rank, n), seed=seed)
    else:  # pp2
        if rank is None:
            res = linalg.partial_cholesky(k, trace_tol=config.eps)
            knots = approx_mod.KnotSet(indices=np.array(res.pivots or [0]))
        else:
            knots = approx_mod.select_knots_pivoted(k, rank=min(rank, n))
    return approx_mod.sor_model(spec, x, knots, correct_variance=True)


def build_grid(x, priors: PriorSpec, config: ApproxConfig, seed: int = 0) -> PrecomputedGrid:
    """Build and factor the approximation once per theta1 grid point.

    Each grid point gets its own derived RNG stream, so grids are
    reproducible regardless of evaluation order.
    """
    x = kernels._as_points(x)
    grid = priors.theta1_grid
    n = x.shape[0]
    models, solvers, logdets, ranks = [], [], [], []
    for h, c in enumerate(grid):
        spec = KernelSpec(float(c), 1.0)
        k = kernels.gram(spec, x)
        rank_override = None if config.ranks is None else int(config.ranks[h])
        cell_seed = int(np.random.default_rng([seed, h]).integers(2**63))
        model = _reference_model(k, x, spec, config, rank_override, cell_seed)
        lam = np.maximum(model.d_m, _DM_FLOOR)
        solver = linalg.DiagLowRank(lam, model.model.u, model.model.d2)
        models.append(model)
        solvers.append(solver)
        logdets.append(solver.logdet())
        ranks.append(model.rank)
    max_rank = max(int(r) for r in ranks) if ranks else 0
    inv_lam = np.empty((grid.size, n))
    whitened = np.zeros((grid.size, n, max_rank))
    for h, solver in enumerate(solvers):
        inv_lam[h] = 1.0 / solver.lam
        # quad(g) = g' diag(1/lam) g - ||(W L^-T)' g||^2
        half = scipy.linalg.solve_triangular(
            solver._chol, solver._w.T, lower=True, check_finite=False)
        whitened[h, :, :half.shape[0]] = half.T
    return PrecomputedGrid(grid, x, config, models, solvers,
                           np.array(logdets), np.array(ranks, dtype=int),
                           inv_lam, whitened)


@dataclass
class PosteriorSamples:
    """Post burn-in Gibbs output."""

    tau: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    ranks: np.ndarray
    g_mean: np.ndarray
    iterations: int
    burnin: int
    seed: int
    g_draws: np.ndarray | None = None

    @property
    def average_rank(self) -> float:
        return float(np.mean(self.ranks))

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for name, chain in (("tau", self.tau), ("theta1", self.theta1),
                            ("theta2", self.theta2)):
            lo, hi = np.quantile(chain, [0.025, 0.975])
            out[name] = {
                "mean": float(np.mean(chain)),
                "ci_low": float(lo),
                "ci_high": float(hi),
                "ess": ess(chain),
            }
        return out


def marginal_loglik(y: np.ndarray, model: GpApproximation, tau: float) -> float:
    """Gaussian log-density of y under N(0, Q + tau^-1 I), factored solves only."""
    y = np.asarray(y, dtype=float).ravel()
    if tau <= 0:
        raise ValueError("tau must be positive")
    lr = model.model
    if y.size != lr.n:
        raise DimensionMismatch(f"y has length {y.size}, model has n={lr.n}")
    d_m = lr.d_m if lr.d_m is not None else np.zeros(lr.n)
    solver = linalg.DiagLowRank(d_m + 1.0 / tau, lr.u, lr.d2)
    ll = -0.5 * (y.size * np.log(2.0 * np.pi) + solver.logdet() + solver.quad(y))
    if not np.isfinite(ll):
        raise NonFiniteLikelihood(f"log-likelihood evaluated to {ll}")
    return float(ll)


def _sample_prior_g(grid: PrecomputedGrid, h: int, th2: float, rng) -> np.ndarray:
    lr = grid.models[h].model
    lam = np.maximum(lr.d_m, _DM_FLOOR)
    z1 = rng.standard_normal(lr.rank)
    z2 = rng.standard_normal(lr.n)
    return (lr.u @ (np.sqrt(lr.d2) * z1) + np.sqrt(lam) * z2) / np.sqrt(th2)


def gibbs(
    data: Dataset,
    priors: PriorSpec,
    grid: PrecomputedGrid,
    iterations: int = 2000,
    burnin: int = 500,
    seed: int = 0,
    *,
    store_g: bool = False,
    prior_only: bool = False,
) -> PosteriorSamples:
    """Gibbs sampler cycling g, tau, theta2, theta1.

    ``prior_only`` switches off every data-dependent term, so the chain
    must reproduce the priors (a plumbing check).  A single chain is
    sequential; chains with distinct seeds are independent.
    """
    if not iterations > burnin >= 0:
        raise InvalidShape(f"need iterations > burnin >= 0, got {iterations}, {burnin}")
    train_idx, _ = data.split()
    y = data.y[train_idx]
    n = y.size
    if n != grid.n:
        raise DimensionMismatch(
            f"grid was built on {grid.n} points but training block has {n}")

    rng = np.random.default_rng(seed)
    t = grid.size
    h = t // 2
    tau = priors.a1 / priors.b1
    th2 = priors.a2 / priors.b2
    g = np.zeros(n)

    kept = iterations - burnin
    out_tau = np.empty(kept)
    out_th1 = np.empty(kept)
    out_th2 = np.empty(kept)
    out_rank = np.empty(kept, dtype=int)
    g_sum = np.zeros(n)
    g_draws = np.empty((kept, n)) if store_g else None

    for it in range(iterations):
        lr = grid.models[h].model
        lam = np.maximum(lr.d_m, _DM_FLOOR)

        # (i) g | tau, theta1, theta2
        if prior_only:
            g = _sample_prior_g(grid, h, th2, rng)
        else:
            g0 = _sample_prior_g(grid, h, th2, rng)
            e = rng.standard_normal(n) / np.sqrt(tau)
            noisy = linalg.DiagLowRank(lam / th2 + 1.0 / tau, lr.u, lr.d2 / th2)
            w = noisy.solve(y - g0 - e)
            qw = (lr.u @ (lr.d2 * (lr.u.T @ w)) + lam * w) / th2
            g = g0 + qw
        if not np.all(np.isfinite(g)):
            raise NonFiniteState(
                f"non-finite g at iteration {it}: tau={tau:.4g} "
                f"theta2={th2:.4g} theta1={grid.theta1_grid[h]:.4g}")

        # (ii) tau | y, g
        if prior_only:
            tau = rng.gamma(priors.a1, 1.0 / priors.b1)
        else:
            resid = y - g
            tau = rng.gamma(priors.a1 + 0.5 * n,
                            1.0 / (priors.b1 + 0.5 * float(resid @ resid)))

        # (iii) theta2 | g, theta1 -- the reference-scale quadratic form is
        # theta2-free, so the conjugate update needs no refactorization
        if prior_only:
            th2 = rng.gamma(priors.a2, 1.0 / priors.b2)
        else:
            quad = grid.solvers[h].quad(g)
            th2 = rng.gamma(priors.a2 + 0.5 * n, 1.0 / (priors.b2 + 0.5 * quad))

        # (iv) theta1 | g, theta2 -- discrete weights, log-sum-exp normalized
        if prior_only:
            h = int(rng.integers(t))
        else:
            logw = -0.5 * grid.logdets - 0.5 * th2 * grid.quads(g)
            if not np.all(np.isfinite(logw)):
                raise NonFiniteState(
                    f"non-finite theta1 weights at iteration {it}: "
                    f"tau={tau:.4g} theta2={th2:.4g}")
            p = np.exp(logw - np.max(logw))
            p /= p.sum()
            h = int(rng.choice(t, p=p))

        if not (np.isfinite(tau) and np.isfinite(th2) and tau > 0 and th2 > 0
                and np.all(np.isfinite(g))):
            raise NonFiniteState(
                f"non-finite state at iteration {it}: tau={tau:.4g} "
                f"theta2={th2:.4g} |g|max={np.max(np.abs(g)):.4g}")

        if it >= burnin:
            j = it - burnin
            out_tau[j] = tau
            out_th1[j] = grid.theta1_grid[h]
            out_th2[j] = th2
            out_rank[j] = grid.ranks[h]
            g_sum += g
            if store_g:
                g_draws[j] = g

    return PosteriorSamples(out_tau, out_th1, out_th2, out_rank,
                            g_sum / kept, iterations, burnin, seed,
                            g_draws=g_draws)


@dataclass
class FactoredPredictiveCov:
    """Predictive covariance U core U^T + diag(extra), kept factored."""

    u: np.ndarray
    core: np.ndarray
    extra_diag: np.ndarray

    def diagonal(self) -> np.ndarray:
        return np.einsum("ij,jk,ik->i", self.u, self.core, self.u) + self.extra_diag

    def dense(self) -> np.ndarray:
        return self.u @ self.core @ self.u.T + np.diag(self.extra_diag)


def predict(
    model: GpApproximation,
    tau: float,
    y_o: np.ndarray,
    observed_idx,
    predict_idx,
) -> tuple[np.ndarray, FactoredPredictiveCov]:
    """Conditional prediction under the approximate prior, index-split form.

    mean = Q_po (Q_oo + tau^-1 I)^-1 y_o and covariance
    Q_pp - Q_po (Q_oo + tau^-1 I)^-1 Q_op, with every inverse applied
    through the diagonal-plus-low-rank identity; no n x n matrix is formed.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    lr = model.model
    obs = np.asarray(observed_idx, dtype=int)
    pred = np.asarray(predict_idx, dtype=int)
    y_o = np.asarray(y_o, dtype=float).ravel()
    if y_o.size != obs.size:
        raise DimensionMismatch("y_o length must match observed_idx")
    d_m = lr.d_m if lr.d_m is not None else np.zeros(lr.n)
    u_o, u_p = lr.u[obs], lr.u[pred]
    noisy = linalg.DiagLowRank(d_m[obs] + 1.0 / tau, u_o, lr.d2)
    w = noisy.solve(y_o)
    mean = u_p @ (lr.d2 * (u_o.T @ w))
    z = u_o * lr.d2[None, :]
    core = np.diag(lr.d2) - z.T @ noisy.solve(z)
    core = (core + core.T) / 2.0
    return mean, FactoredPredictiveCov(u_p, core, d_m[pred])


def predict_at(
    model: GpApproximation,
    tau: float,
    y_o: np.ndarray,
    xnew,
) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in prediction at new locations via the stored projection factors.

    Returns the predictive mean and variance at each row of ``xnew``; the
    corrected methods restore the exact prior variance k(x, x) at new
    points.
    """
    lr = model.model
    if model.kernel is None or model.x is None:
        raise InvalidShape("model lacks kernel/location context for new points")
    xnew = kernels._as_points(xnew)
    y_o = np.asarray(y_o, dtype=float).ravel()
    d_m = lr.d_m if lr.d_m is not None else np.zeros(lr.n)
    noisy = linalg.DiagLowRank(d_m + 1.0 / tau, lr.u, lr.d2)
    w = noisy.solve(y_o)
    mean = np.empty(xnew.shape[0])
    var = np.empty(xnew.shape[0])
    corrected = model.method in ("fitc", "rm")
    for i, pt in enumerate(xnew):
        q_x = approx_mod.rp_cross(lr, model.kernel, model.x, pt)
        mean[i] = q_x @ w
        if corrected:
            prior_var = kernels.kernel_eval(model.kernel, pt, pt)
        else:
            prior_var = _rp_prior_var(lr, model.kernel, model.x, pt)
        var[i] = prior_var - float(q_x @ noisy.solve(q_x))
    return mean, var


def _rp_prior_var(lr, spec, x, pt) -> float:
    """q(x, x) for the uncorrected projection approximation."""
    kx = kernels.cross_cov(spec, pt, x)
    half = scipy.linalg.solve_triangular(lr.core_lower, lr.phi.phi @ kx,
                                         lower=True)
    return float(half @ half)


def ess(chain) -> float:
    """Effective sample size with initial-positive-sequence truncation.

    ESS = N / (1 + 2 sum rho_k), summing consecutive autocorrelation pairs
    while their sums stay positive.  A constant chain is treated as
    uncorrelated (ESS = N).
    """
    x = np.asarray(chain, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ChainTooShort(f"need at least 10 samples, got {n}")
    x = x - np.mean(x)
    var0 = float(x @ x) / n
    if var0 == 0.0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    iat = 0.0
    for m in range(n // 2):
        pair = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < n else 0.0)
        if pair <= 0.0:
            break
        iat += 2.0 * pair
    iat -= 1.0
    return float(n / max(iat, 1e-12))


def mspe(pred, truth) -> float:
    """Mean squared prediction error."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size != truth.size:
        raise DimensionMismatch("prediction and truth lengths differ")
    return float(np.mean((pred - truth) ** 2))
