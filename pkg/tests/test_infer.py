import numpy as np
import pytest
import scipy.stats
from numpy.testing import assert_allclose

from gpsketch import approx, infer, kernels, linalg, sketch
from gpsketch.errors import ChainTooShort, DimensionMismatch, NonFiniteState
from gpsketch.infer import ApproxConfig, PriorSpec
from gpsketch.kernels import Dataset, KernelSpec


def _pinned_priors(theta1, theta2, tau, conc=1e8):
    return PriorSpec(a1=conc, b1=conc / tau, a2=conc, b2=conc / theta2,
                     theta1_grid=np.array([theta1]))


def _dataset(n=40, seed=0, noise_sd=0.4):
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n)
    y = np.sin(5.0 * x) + noise_sd * rng.standard_normal(n)
    return Dataset(x, y)


class TestMarginalLoglik:
    def test_pure_noise_single_point(self):
        model = approx.GpApproximation(
            "rp", sketch.LowRankModel(np.zeros((1, 0)), np.zeros(0)))
        y = np.array([0.7])
        expect = -0.5 * (0.49 + np.log(2 * np.pi))
        assert abs(infer.marginal_loglik(y, model, tau=1.0) - expect) < 1e-12

    def test_matches_dense_gaussian_density(self):
        rng = np.random.default_rng(8)
        n, m = 200, 15
        u, _ = np.linalg.qr(rng.standard_normal((n, m)))
        d2 = rng.uniform(0.1, 3.0, m)
        d_m = rng.uniform(0.0, 0.5, n)
        tau = 2.5
        model = approx.GpApproximation(
            "rm", sketch.LowRankModel(u, d2, d_m=d_m))
        y = rng.standard_normal(n)
        dense_cov = (u * d2) @ u.T + np.diag(d_m) + np.eye(n) / tau
        expect = scipy.stats.multivariate_normal.logpdf(y, cov=dense_cov)
        assert abs(infer.marginal_loglik(y, model, tau) - expect) < 1e-6

    def test_monotone_in_excess_noise(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal(120)  # unit-variance data
        model = approx.GpApproximation(
            "rp", sketch.LowRankModel(np.zeros((120, 0)), np.zeros(0)))
        lls = [infer.marginal_loglik(y, model, tau) for tau in (1.0, 0.5, 0.25)]
        assert lls[0] > lls[1] > lls[2]


class TestGridBuild:
    def test_modes_and_ranks(self):
        x = np.linspace(0, 1, 50)
        priors = PriorSpec(theta1_grid=np.array([0.5, 1.0, 1.5]))
        fixed = infer.build_grid(x, priors, ApproxConfig("rp", rank=6), seed=1)
        assert list(fixed.ranks) == [6, 6, 6]
        target = infer.build_grid(x, priors, ApproxConfig("rp", eps=0.1), seed=1)
        assert np.all(target.ranks >= 1)
        paired = infer.build_grid(
            x, priors, ApproxConfig("pp1", ranks=tuple(target.ranks)), seed=1)
        assert np.array_equal(paired.ranks, target.ranks)

    def test_knot_methods(self):
        x = np.linspace(0, 1, 30)
        priors = PriorSpec(theta1_grid=np.array([0.8]))
        for method in ("pp1", "pp2"):
            grid = infer.build_grid(x, priors, ApproxConfig(method, rank=5),
                                    seed=2)
            assert grid.models[0].method == "fitc"
            assert grid.ranks[0] == 5

    def test_corrected_diagonal_is_exact(self):
        x = np.linspace(0, 2, 40)
        priors = PriorSpec(theta1_grid=np.array([1.0]))
        grid = infer.build_grid(x, priors, ApproxConfig("rp", rank=8), seed=3)
        assert_allclose(grid.models[0].model.diag(), np.ones(40), atol=1e-10)


class TestGibbs:
    def test_prior_reproduction(self):
        data = _dataset(20, seed=1)
        priors = PriorSpec(a1=2.0, b1=5.0, a2=3.0, b2=6.0,
                           theta1_grid=np.array([0.5, 1.0]))
        grid = infer.build_grid(data.x, priors, ApproxConfig("rp", rank=4),
                                seed=0)
        run = infer.gibbs(data, priors, grid, iterations=4200, burnin=200,
                          seed=11, prior_only=True)
        n = run.tau.size
        se_tau = np.sqrt(priors.a1 / priors.b1 ** 2 / n)
        assert abs(np.mean(run.tau) - priors.a1 / priors.b1) <= 3 * se_tau
        se_th2 = np.sqrt(priors.a2 / priors.b2 ** 2 / n)
        assert abs(np.mean(run.theta2) - priors.a2 / priors.b2) <= 3 * se_th2
        # theta1 uniform over its two atoms
        frac = np.mean(run.theta1 == 0.5)
        assert abs(frac - 0.5) <= 3 * 0.5 / np.sqrt(n)

    def test_fixed_hyperparameter_conjugate_oracle(self):
        theta1, theta2, tau = 0.8, 1.2, 4.0
        data = _dataset(40, seed=2)
        priors = _pinned_priors(theta1, theta2, tau)
        grid = infer.build_grid(data.x, priors, ApproxConfig("rp", rank=10),
                                seed=4)
        run = infer.gibbs(data, priors, grid, iterations=5200, burnin=200,
                          seed=7, store_g=True)
        lr = grid.models[0].model
        q = ((lr.u * lr.d2) @ lr.u.T + np.diag(lr.d_m)) / theta2
        oracle = q @ np.linalg.solve(q + np.eye(40) / tau, data.y)
        n_draws = run.g_draws.shape[0]
        se = run.g_draws.std(axis=0, ddof=1) / np.sqrt(n_draws)
        assert np.all(np.abs(run.g_mean - oracle) <= 3.0 * se)

    def test_theta2_rescaling_equivalence(self):
        # fast kernel decay keeps the variance deficit solidly positive, so
        # the comparison is not dominated by the tiny diagonal floor
        x = np.linspace(0, 1, 30)
        c, th2, tau = 40.0, 2.7, 3.1
        priors = PriorSpec(theta1_grid=np.array([c]))
        grid = infer.build_grid(x, priors, ApproxConfig("rp", rank=6), seed=5)
        lr = grid.models[0].model
        rng = np.random.default_rng(0)
        g = rng.standard_normal(30)
        y = rng.standard_normal(30)

        # fresh factors at the current theta2, same projection
        k_scaled = kernels.gram(KernelSpec(c, th2), x)
        model_b = sketch.nystrom_from_projection(k_scaled, lr.phi)
        d_m_b = np.maximum(np.diag(k_scaled) - model_b.diag(), 1e-12 / th2)

        # theta2 conditional: the reference-scale quadratic g' R^-1 g equals
        # the fresh-factor quadratic divided by theta2 (R = theta2 * Q)
        quad_ref = grid.solvers[0].quad(g)
        fresh = linalg.DiagLowRank(d_m_b, model_b.u, model_b.d2)
        assert abs(quad_ref - fresh.quad(g) / th2) <= 1e-8 * abs(quad_ref)

        # theta1 weight: reference logdet equals fresh + n log(theta2)
        assert abs(grid.logdets[0] - (fresh.logdet() + 30 * np.log(th2))) < 1e-8

        # g conditional mean through both routes
        lam = np.maximum(lr.d_m, 1e-12)
        s_a = linalg.DiagLowRank(lam / th2 + 1.0 / tau, lr.u, lr.d2 / th2)
        w_a = s_a.solve(y)
        mean_a = (lr.u @ (lr.d2 * (lr.u.T @ w_a)) + lam * w_a) / th2
        s_b = linalg.DiagLowRank(d_m_b + 1.0 / tau, model_b.u, model_b.d2)
        w_b = s_b.solve(y)
        mean_b = model_b.u @ (model_b.d2 * (model_b.u.T @ w_b)) + d_m_b * w_b
        assert np.linalg.norm(mean_a - mean_b) <= 1e-8 * np.linalg.norm(mean_b)

    def test_chains_are_deterministic(self):
        data = _dataset(25, seed=3)
        priors = PriorSpec(theta1_grid=np.array([0.5, 1.0, 1.5]))
        grid = infer.build_grid(data.x, priors, ApproxConfig("rp", rank=5),
                                seed=1)
        a = infer.gibbs(data, priors, grid, iterations=50, burnin=10, seed=9)
        b = infer.gibbs(data, priors, grid, iterations=50, burnin=10, seed=9)
        assert np.array_equal(a.tau, b.tau)
        assert np.array_equal(a.theta1, b.theta1)
        assert np.array_equal(a.theta2, b.theta2)

    def test_state_stays_valid(self):
        data = _dataset(30, seed=4)
        priors = PriorSpec(theta1_grid=np.array([0.4, 0.9, 1.4]))
        grid = infer.build_grid(data.x, priors, ApproxConfig("rp", eps=0.1),
                                seed=2)
        run = infer.gibbs(data, priors, grid, iterations=300, burnin=50, seed=3)
        assert np.all(run.tau > 0) and np.all(run.theta2 > 0)
        assert set(np.unique(run.theta1)) <= set(priors.theta1_grid)
        assert run.ranks.size == 250

    def test_non_finite_data_aborts_with_iteration(self):
        data = _dataset(20, seed=5)
        data.y[3] = np.nan
        priors = PriorSpec(theta1_grid=np.array([1.0]))
        grid = infer.build_grid(data.x, priors, ApproxConfig("rp", rank=4),
                                seed=0)
        with pytest.raises(NonFiniteState, match="iteration"):
            infer.gibbs(data, priors, grid, iterations=20, burnin=0, seed=0)


class TestPredict:
    def _full_rank_model(self, x, spec):
        k = kernels.gram(spec, x)
        knots = approx.KnotSet(indices=np.arange(x.size))
        return approx.sor_model(spec, x, knots, correct_variance=True), k

    def test_exact_gp_oracle(self):
        x = np.linspace(0, 10, 50)
        spec = KernelSpec(5.0, 1.0)  # fast decay keeps the Gram invertible
        model, k = self._full_rank_model(x, spec)
        tau = 4.0
        obs = np.arange(0, 50, 2)
        pred = np.arange(1, 50, 2)
        rng = np.random.default_rng(1)
        y_o = rng.standard_normal(obs.size)
        mean, cov = infer.predict(model, tau, y_o, obs, pred)
        s = k[np.ix_(obs, obs)] + np.eye(obs.size) / tau
        expect_mean = k[np.ix_(pred, obs)] @ np.linalg.solve(s, y_o)
        expect_cov = k[np.ix_(pred, pred)] - \
            k[np.ix_(pred, obs)] @ np.linalg.solve(s, k[np.ix_(obs, pred)])
        assert np.linalg.norm(mean - expect_mean) <= \
            1e-8 * max(np.linalg.norm(expect_mean), 1.0)
        assert np.max(np.abs(cov.dense() - expect_cov)) < 1e-8

    def test_large_noise_shrinks_to_prior_mean(self):
        x = np.linspace(0, 1, 20)
        model, _ = self._full_rank_model(x, KernelSpec(1.0))
        y_o = np.ones(10)
        mean, _ = infer.predict(model, 1e-12, y_o, np.arange(10),
                                np.arange(10, 20))
        assert np.max(np.abs(mean)) < 1e-9

    def test_independent_blocks(self):
        # low-rank part lives entirely on the observed block
        rng = np.random.default_rng(2)
        u_obs, _ = np.linalg.qr(rng.standard_normal((10, 3)))
        u = np.vstack([u_obs, np.zeros((5, 3))])
        d_m = np.full(15, 0.3)
        model = approx.GpApproximation(
            "rm", sketch.LowRankModel(u, np.array([3.0, 2.0, 1.0]), d_m=d_m))
        mean, cov = infer.predict(model, 2.0, rng.standard_normal(10),
                                  np.arange(10), np.arange(10, 15))
        assert np.max(np.abs(mean)) < 1e-12
        assert_allclose(cov.diagonal(), d_m[10:], atol=1e-12)

    def test_predict_at_matches_index_split(self):
        x = np.linspace(0, 1, 36)
        spec = KernelSpec(2.0)
        k = kernels.gram(spec, x)
        obs = np.arange(30)
        new = x[30:]
        model_obs = sketch.nystrom_fixed_rank(kernels.gram(spec, x[obs]), 8,
                                              seed=3)
        fitted = approx.rm_correct(model_obs, np.ones(30), kernel=spec,
                                   x=x[obs])
        rng = np.random.default_rng(4)
        y_o = rng.standard_normal(30)
        mean, var = infer.predict_at(fitted, 3.0, y_o, new)
        # oracle: dense conditional with the same approximate prior blocks
        q_oo = fitted.model.dense()
        q_no = np.array([approx.rp_cross(fitted.model, spec, x[obs], p)
                         for p in new])
        s = q_oo + np.eye(30) / 3.0
        expect_mean = q_no @ np.linalg.solve(s, y_o)
        expect_var = np.ones(6) - np.einsum(
            "ij,ji->i", q_no, np.linalg.solve(s, q_no.T))
        assert_allclose(mean, expect_mean, rtol=1e-8, atol=1e-10)
        assert_allclose(var, expect_var, rtol=1e-6, atol=1e-10)


class TestChainDiagnostics:
    def test_iid_ess(self):
        chain = np.random.default_rng(0).standard_normal(10_000)
        assert 8000 <= infer.ess(chain) <= 12_000

    def test_ar1_ess_ratio(self):
        rho = 0.9
        rng = np.random.default_rng(1)
        n = 200_000
        x = np.empty(n)
        x[0] = rng.standard_normal()
        eps = rng.standard_normal(n) * np.sqrt(1 - rho ** 2)
        for t in range(1, n):
            x[t] = rho * x[t - 1] + eps[t]
        ratio = infer.ess(x) / n
        expect = (1 - rho) / (1 + rho)
        assert 0.5 * expect <= ratio <= 1.5 * expect

    def test_constant_chain(self):
        assert infer.ess(np.ones(100)) == 100.0

    def test_too_short(self):
        with pytest.raises(ChainTooShort):
            infer.ess(np.arange(5))

    def test_mspe(self):
        assert infer.mspe([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert infer.mspe([1.0, 3.0], [0.0, 1.0]) == 2.5
        with pytest.raises(DimensionMismatch):
            infer.mspe([1.0], [1.0, 2.0])
