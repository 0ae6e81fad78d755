import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from semibayes.dist import (
    DistKernel,
    Family,
    ald_expansion_constants,
    beta_quantile,
    gig_mean,
    ks_statistic,
    normal_cdf,
    normal_quantile,
    sample_dirichlet_flat,
    sample_gig,
    truncated_normal_sample,
)
from semibayes.errors import DomainError


def erf_series(x, terms=60):
    # Maclaurin series of erf, adequate for |x| < 3
    s = 0.0
    for k in range(terms):
        s += (-1) ** k * x ** (2 * k + 1) / (math.factorial(k) * (2 * k + 1))
    return 2.0 / math.sqrt(math.pi) * s


class TestNormal:
    def test_median(self):
        assert normal_cdf(0.0, 0.0, 1.0) == 0.5
        assert normal_quantile(0.5, 0.0, 1.0) == 0.0
        assert normal_quantile(0.5, 3.0, 7.0) == 3.0

    def test_against_series(self):
        x = 1.959964
        ref = 0.5 * (1 + erf_series(x / math.sqrt(2)))
        assert normal_cdf(x, 0, 1) == pytest.approx(ref, abs=1e-12)
        assert ref == pytest.approx(0.975, abs=1e-6)

    def test_standardization(self):
        assert normal_cdf(3.0, 1.0, 2.0) == normal_cdf(1.0, 0.0, 1.0)

    def test_quantile_bisection(self):
        root = optimize.bisect(lambda t: normal_cdf(t) - 0.975, 0, 5, xtol=1e-14)
        assert normal_quantile(0.975) == pytest.approx(root, abs=1e-10)
        assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            normal_quantile(bad)

    def test_nonpositive_sd(self):
        with pytest.raises(DomainError):
            normal_cdf(0.0, 0.0, 0.0)


class TestDirichlet:
    def test_degenerate(self, rng):
        assert sample_dirichlet_flat(1, rng).tolist() == [1.0]

    def test_simplex(self, rng):
        w = sample_dirichlet_flat(3, rng)
        assert abs(w.sum() - 1.0) < 1e-12 and np.all(w >= 0)

    def test_mean(self):
        rng = np.random.default_rng(0)
        e = rng.standard_exponential((10**6, 2))
        # same construction as the sampler, vectorized over replicates
        w1 = e[:, 0] / e.sum(axis=1)
        assert abs(w1.mean() - 0.5) < 0.002
        draws = np.array([sample_dirichlet_flat(2, rng)[0] for _ in range(20000)])
        assert abs(draws.mean() - 0.5) < 0.01


class TestAld:
    def test_median_constants(self):
        a, b = ald_expansion_constants(0.5)
        assert a == 0.0 and b == pytest.approx(math.sqrt(8))

    def test_tau_005(self):
        a, b = ald_expansion_constants(0.05)
        assert a == pytest.approx(0.9 / 0.0475, rel=1e-12)
        assert a == pytest.approx(18.947368, abs=1e-6)
        assert b == pytest.approx(6.488857, abs=1e-6)

    def test_antisymmetry(self):
        assert ald_expansion_constants(0.25)[0] == pytest.approx(-ald_expansion_constants(0.75)[0])

    @pytest.mark.parametrize("tau", [0.05, 0.25, 0.5, 0.9])
    def test_tau_quantile_is_zero(self, rng, tau):
        a, b = ald_expansion_constants(tau)
        xi = rng.standard_exponential(10**5)
        e = a * xi + b * np.sqrt(xi) * rng.standard_normal(xi.size)
        # binomial standard error of the empirical cdf at zero
        se = math.sqrt(tau * (1 - tau) / xi.size)
        assert abs(np.mean(e < 0) - tau) < 4 * se

    @pytest.mark.parametrize("tau", [0.0, 1.0, -1.0])
    def test_domain(self, tau):
        with pytest.raises(DomainError):
            ald_expansion_constants(tau)


def gig_density(lam, chi, psi):
    return lambda x: x ** (lam - 1) * math.exp(-0.5 * (chi / x + psi * x))


def gig_quadrature_mean(lam, chi, psi):
    f = gig_density(lam, chi, psi)
    z = integrate.quad(f, 0, np.inf, limit=200)[0]
    m = integrate.quad(lambda x: x * f(x), 0, np.inf, limit=200)[0]
    return m / z


class TestGig:
    def test_inverse_gaussian_mean(self, rng):
        chi, psi = 2.0, 3.0
        x = sample_gig(-0.5, chi, psi, rng, size=10**6)
        ref = math.sqrt(chi / psi)
        # inverse Gaussian variance mu^3 / shape with shape = chi
        se = math.sqrt(ref**3 / chi / x.size)
        assert abs(x.mean() - ref) < 5 * se

    def test_quadrature_mean(self, rng):
        x = sample_gig(0.5, 1.0, 1.0, rng, size=10**6)
        assert x.mean() == pytest.approx(gig_quadrature_mean(0.5, 1.0, 1.0), rel=0.01)

    def test_mean_formula(self):
        for p in [(0.5, 1.0, 1.0), (-0.5, 2.0, 3.0), (2.0, 0.3, 4.0)]:
            assert gig_mean(*p) == pytest.approx(gig_quadrature_mean(*p), rel=1e-6)

    @pytest.mark.parametrize("params", [(0.5, 1e-6, 2.1), (0.5, 40.0, 2.0), (-3.0, 1.0, 1.0), (5.0, 0.5, 0.5)])
    def test_ks_against_density(self, rng, params):
        lam, chi, psi = params
        f = gig_density(lam, chi, psi)
        z = integrate.quad(f, 0, np.inf, limit=200)[0]
        x = sample_gig(lam, chi, psi, rng, size=4000)
        assert np.all(x > 0)
        grid = np.quantile(x, np.linspace(0.05, 0.95, 7))
        for t in grid:
            emp = np.mean(x <= t)
            ref = integrate.quad(f, 0, t, limit=200)[0] / z
            assert abs(emp - ref) < 0.03

    def test_domain(self, rng):
        with pytest.raises(DomainError):
            sample_gig(0.5, 0.0, 1.0, rng)
        with pytest.raises(DomainError):
            sample_gig(0.5, 1.0, -1.0, rng)


class TestBeta:
    def test_bounds(self):
        assert beta_quantile(0.0, 0.1, 0.5) == 0.0
        assert beta_quantile(1.0, 0.1, 0.5) == 1.0
        assert beta_quantile(0.5, 1.0, 1.0) == pytest.approx(0.5)

    def test_quadrature_bisection(self):
        a, b = 0.1, 0.5
        norm = math.gamma(a) * math.gamma(b) / math.gamma(a + b)

        def cdf(x):
            # substitute x = u^(1/a) to remove the endpoint singularity
            return integrate.quad(lambda u: (1 - u ** (1 / a)) ** (b - 1) / a, 0, x**a)[0] / norm

        root = optimize.bisect(lambda x: cdf(x) - 0.3, 1e-300, 0.999, xtol=1e-15)
        assert beta_quantile(0.3, a, b) == pytest.approx(root, rel=1e-6)


class TestDistKernel:
    FAMILIES = [
        DistKernel(Family.NORMAL, (1.0, 2.0)),
        DistKernel(Family.EXPONENTIAL, (1.5,)),
        DistKernel(Family.GAMMA, (2.5, 0.5)),
        DistKernel(Family.BETA, (0.5, 2.0)),
        DistKernel(Family.ASYMMETRIC_LAPLACE, (0.2,)),
        DistKernel(Family.GIG, (0.5, 1.0, 2.0)),
        DistKernel(Family.TRUNCATED_NORMAL, (0.5, 0.5, 0.0, 2.0)),
    ]

    @pytest.mark.parametrize("k", FAMILIES, ids=lambda k: k.family.value)
    def test_quantile_inverts_cdf(self, k):
        lo, hi = k.quantile(0.02), k.quantile(0.98)
        t = np.linspace(lo, hi, 9)
        np.testing.assert_allclose([k.quantile(k.cdf(v)) for v in t], t, rtol=1e-8, atol=1e-8)

    @pytest.mark.parametrize("k", FAMILIES, ids=lambda k: k.family.value)
    def test_cdf_monotone(self, k):
        t = np.linspace(k.quantile(0.001), k.quantile(0.999), 200)
        F = np.array([k.cdf(v) for v in t])
        assert np.all(np.diff(F) >= 0)

    @pytest.mark.parametrize("k", FAMILIES, ids=lambda k: k.family.value)
    def test_sampler_ks(self, k):
        x = k.sample(np.random.default_rng(3), 20000)
        d = ks_statistic(x, lambda v: np.array([k.cdf(u) for u in v]))
        # asymptotic critical value at the 0.001 level
        assert d < 1.95 / math.sqrt(x.size)

    @pytest.mark.parametrize("k", FAMILIES, ids=lambda k: k.family.value)
    def test_sampler_mean(self, k):
        x = k.sample(np.random.default_rng(4), 10**5)
        assert abs(x.mean() - k.mean()) < 5 * x.std() / math.sqrt(x.size)


def test_truncated_normal_support(rng):
    x = truncated_normal_sample(0.5, 0.5, 0.0, 2.0, rng, size=10**5)
    assert x.min() > 0 and x.max() < 2
    ref = stats.truncnorm(-1.0, 3.0, loc=0.5, scale=0.5)
    assert stats.kstest(x, ref.cdf).pvalue > 0.001
