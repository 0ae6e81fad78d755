import numpy as np
import pytest
from scipy import stats

from semibayes.data import Dataset
from semibayes.errors import ConfigError, DomainError, InputError, NumericalError
from semibayes.simlab import hpd_interval, metric_interval, metric_selection
from semibayes.sblm import (
    SblmConfig,
    _GPriorCache,
    posterior_mean_transform,
    sblm_draw_sigma_theta,
    sblm_fzx_components,
    sblm_gamma_parameters,
    sblm_laplace_approx,
    sblm_log_importance_weight,
    sblm_prior_approx,
    sblm_prior_theta_draws,
    sblm_run,
)
from semibayes.transform import ApproxPosterior


def linear_data(n, theta, rng, noise=1.0):
    X = rng.normal(size=(n, len(theta)))
    return X, X @ np.asarray(theta) + noise * rng.normal(size=n)


class TestComponents:
    def test_degenerate(self):
        X = np.arange(6.0).reshape(3, 2)
        comps = sblm_fzx_components(X, ApproxPosterior(np.zeros(2), np.zeros((2, 2))))
        np.testing.assert_array_equal(comps.means[:, 0], 0.0)
        np.testing.assert_array_equal(comps.sds[:, 0], 1.0)

    def test_prior_source(self, rng):
        X = rng.normal(size=(8, 3))
        comps = sblm_fzx_components(X, sblm_prior_approx(X, 4.0))
        H = X @ np.linalg.inv(X.T @ X) @ X.T
        np.testing.assert_allclose(comps.sds[:, 0] ** 2, 1 + 4.0 * np.diag(H), rtol=1e-12)

    def test_laplace_normal_equations(self):
        X = np.array([[1.0, 0.5], [2.0, -1.0], [0.0, 1.0], [-1.0, 2.0], [3.0, 0.0]])
        z = np.array([0.2, 1.0, -0.4, 0.3, 2.0])
        psi = 5.0
        a = sblm_laplace_approx(X, z, psi)
        beta = np.linalg.solve(X.T @ X, X.T @ z)
        np.testing.assert_allclose(a.mean, psi / (1 + psi) * beta, rtol=1e-12)
        np.testing.assert_allclose(a.covariance, psi / (1 + psi) * np.linalg.inv(X.T @ X), rtol=1e-12)

    def test_not_psd(self):
        X = np.eye(2)
        approx = ApproxPosterior(np.zeros(2), np.eye(2))
        approx.covariance = -2.0 * np.eye(2)
        with pytest.raises(NumericalError):
            sblm_fzx_components(X, approx)

    def test_rank_deficient(self):
        X = np.ones((5, 2))
        with pytest.raises(NumericalError):
            sblm_prior_approx(X, 1.0)


class TestConjugateDraw:
    def test_gamma_shape(self, rng):
        X1 = np.column_stack([np.ones(12), rng.normal(size=12)])
        shape, _ = sblm_gamma_parameters(X1, rng.normal(size=12), 12.0, 0.3, 0.001)
        assert shape == 0.3 + 6.0

    def test_large_psi_is_ols(self, rng):
        X1 = np.column_stack([np.ones(20), rng.normal(size=(20, 2))])
        z = X1 @ [1.0, -2.0, 0.5] + 0.3 * rng.normal(size=20)
        ols = np.linalg.solve(X1.T @ X1, X1.T @ z)
        cache = _GPriorCache(X1)
        draws = np.array([sblm_draw_sigma_theta(X1, z, 1e12, 0.001, 0.001, rng, cache)[1] for _ in range(4000)])
        se = draws.std(axis=0) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - ols) < 4 * se)

    def test_conditional_mean(self):
        rng = np.random.default_rng(11)
        X1 = np.column_stack([np.ones(15), rng.normal(size=(15, 2))])
        z = rng.normal(size=15)
        psi = 3.0
        cache = _GPriorCache(X1)
        out = [sblm_draw_sigma_theta(X1, z, psi, 0.001, 0.001, rng, cache) for _ in range(10**4)]
        theta = np.array([o[1] for o in out])
        # Q^-1 l does not depend on sigma: psi/(1+psi) (X'X)^-1 X'z
        target = psi / (1 + psi) * np.linalg.solve(X1.T @ X1, X1.T @ z)
        se = theta.std(axis=0) / 100
        assert np.all(np.abs(theta.mean(axis=0) - target) < 4 * se)
        sig = np.array([o[0] for o in out])
        shape, rate = sblm_gamma_parameters(X1, z, psi, 0.001, 0.001)
        assert stats.kstest(sig**-2, stats.gamma(shape, scale=1 / rate).cdf).pvalue > 0.001
        assert np.all(sig > 0)


class TestImportanceWeight:
    def test_no_covariates(self, rng):
        X = np.zeros((6, 0))
        z = rng.normal(size=6)
        lw = sblm_log_importance_weight(z, np.full(6, 1 / 6), np.zeros((10, 0)), X, z, sblm_prior_approx(X, 1.0))
        assert lw == pytest.approx(0.0, abs=1e-12)

    def test_single_observation(self):
        rng = np.random.default_rng(2)
        X = np.array([[0.7]])
        prior = sblm_prior_approx(X, 2.0)
        thetas = sblm_prior_theta_draws(X, 2.0, 10**5, rng)
        lw = sblm_log_importance_weight(np.array([0.4]), np.ones(1), thetas, X, np.array([0.4]), prior)
        assert np.exp(lw) == pytest.approx(1.0, abs=0.01)

    def test_sir_changes_little(self):
        rng = np.random.default_rng(3)
        X, y = linear_data(50, [1.0, 0.5, 0.0], rng)
        cfg = SblmConfig(num_draws=1000, sir_enabled=True, approx_source="prior")
        draws = sblm_run(Dataset(X, y), cfg, X[:1], seed=5)
        assert np.all(np.isfinite(draws.log_imp_weights) | (draws.log_imp_weights == -np.inf))
        adj = draws.resampled().predictive_draws[:, 0]
        assert stats.ks_2samp(adj, draws.predictive_draws[:, 0]).statistic < 0.1
        assert draws.sir.ess > 0


class TestRun:
    def test_shapes_and_coherence(self, rng):
        X, y = linear_data(40, [1.0, -1.0], rng)
        Xq = rng.normal(size=(7, 2))
        draws = sblm_run(Dataset(X, np.exp(y)), SblmConfig(num_draws=50), Xq, seed=1)
        assert draws.theta_draws.shape == (50, 3)
        assert draws.predictive_draws.shape == (50, 7)
        assert np.all(draws.sigma_draws > 0)
        assert np.all(draws.predictive_draws > 0)
        assert len(draws.g_draws) == 50
        gbar = posterior_mean_transform(draws.g_draws, np.sort(np.exp(y)))
        assert np.all(np.diff(gbar) >= 0)

    def test_workers_do_not_change_draws(self, rng):
        X, y = linear_data(30, [1.0], rng)
        a = sblm_run(Dataset(X, y), SblmConfig(num_draws=20), seed=9)
        b = sblm_run(Dataset(X, y), SblmConfig(num_draws=20, workers=3), seed=9)
        np.testing.assert_array_equal(a.theta_draws, b.theta_draws)
        np.testing.assert_array_equal(a.predictive_draws, b.predictive_draws)

    def test_draw_order_irrelevant(self, rng):
        X, y = linear_data(30, [1.0], rng)
        a = sblm_run(Dataset(X, y), SblmConfig(num_draws=40), seed=9)
        b = sblm_run(Dataset(X, y), SblmConfig(num_draws=20), seed=9)
        np.testing.assert_array_equal(a.theta_draws[:20], b.theta_draws)

    def test_identity_coverage(self):
        cover = []
        for r in range(20):
            rng = np.random.default_rng(100 + r)
            X, y = linear_data(300, [1.0, 0.5, -0.5], rng)
            Xt, yt = linear_data(200, [1.0, 0.5, -0.5], rng)
            draws = sblm_run(Dataset(X, y), SblmConfig(num_draws=300), Xt, seed=r)
            cover.append(metric_interval(draws.predictive_draws, yt, 0.9)[1])
        assert 0.83 <= np.mean(cover) <= 0.97

    def test_null_false_positives(self):
        fpr = []
        for r in range(10):
            rng = np.random.default_rng(400 + r)
            X = rng.normal(size=(100, 10))
            draws = sblm_run(Dataset(X, rng.normal(size=100)), SblmConfig(num_draws=400), seed=r)
            fpr.append(1 - metric_selection(draws.theta_draws[:, 1:], np.zeros(10))[1])
        assert np.mean(fpr) <= 0.1

    def test_hpd_selection_consistency(self):
        ok = 0
        for r in range(20):
            rng = np.random.default_rng(200 + r)
            theta = np.array([1.0, 1.0, 0.0, 0.0])
            X, z = linear_data(1000, theta, rng)
            draws = sblm_run(Dataset(X, np.exp(z / 3)), SblmConfig(num_draws=200), seed=r)
            lo, hi = hpd_interval(draws.theta_draws[:, 1:], 0.95)
            selected = (lo > 0) | (hi < 0)
            ok += bool(np.all(selected == (theta != 0)))
        assert ok >= 18

    def test_scale_robustness(self):
        rng = np.random.default_rng(6)
        X, z = linear_data(200, [1.0, -0.5], rng)
        data = Dataset(X, z**3)
        Xq = rng.normal(size=(5, 2))
        base = sblm_run(data, SblmConfig(num_draws=500), Xq, seed=3)
        for scale in (3.0, 0.3):
            other = sblm_run(data, SblmConfig(num_draws=500), Xq, seed=3, latent_scale=scale)
            for j in range(5):
                ks = stats.ks_2samp(base.predictive_draws[:, j], other.predictive_draws[:, j]).statistic
                assert ks < 0.05

    def test_too_few_observations(self):
        with pytest.raises(InputError):
            sblm_run(Dataset(np.eye(3), np.arange(3.0)), SblmConfig(num_draws=2), seed=0)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(psi=0.0), dict(a_sigma=-1.0), dict(num_draws=0), dict(sir_enabled=True, num_draws=10, sir_keep=10)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SblmConfig(**kwargs)

    def test_resampled_requires_sir(self, rng):
        X, y = linear_data(20, [1.0], rng)
        with pytest.raises(DomainError):
            sblm_run(Dataset(X, y), SblmConfig(num_draws=5), seed=0).resampled()
