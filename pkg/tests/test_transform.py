import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, special, stats

from semibayes.errors import DegenerateWeightsError, DomainError, InsufficientDataError, NumericalError
from semibayes.transform import (
    ApproxPosterior,
    EmpiricalCdf,
    MixtureCdf,
    MonotoneMap,
    NormalComponents,
    compose_transform,
    effective_sample_size,
    empirical_Fy,
    fit_monotone_interpolant,
    invert_mixture,
    inverse_map,
    location_scale_map,
    plugin_transform,
    point_estimate_transform,
    sample_Fy,
    sample_Fz,
    sir_resample,
    substream,
)


def bisection_quantile(F: MixtureCdf, p):
    return optimize.brentq(lambda t: F.evaluate(t) - p, -100, 100, xtol=1e-14, rtol=1e-15)


class TestEmpiricalCdf:
    def test_single_response_rejected(self, rng):
        with pytest.raises(InsufficientDataError):
            sample_Fy([3.0], rng)

    def test_ties_merge(self, rng):
        F = sample_Fy([3.0, 3.0], rng)
        assert F.atoms.tolist() == [3.0]
        assert F.weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_boundaries(self, rng):
        F = sample_Fy([1.0, 2.0, 3.0], rng)
        assert abs(F.weights.sum() - 1) < 1e-12
        assert F.evaluate(0.0) == 0.0
        assert F.evaluate(3.0) == pytest.approx(1.0)

    def test_mean_is_ecdf(self):
        rng = np.random.default_rng(1)
        y = np.array([0.3, -1.0, 2.0, 0.3, 5.0])
        vals = np.array([sample_Fy(y, rng).evaluate(0.5) for _ in range(10**4)])
        # Dirichlet(1,..,1) weights have mean 1/n; 3 of 5 responses are <= 0.5
        assert vals.mean() == pytest.approx(0.6, abs=0.01)

    def test_atoms_must_increase(self):
        with pytest.raises(DomainError):
            EmpiricalCdf(np.array([1.0, 1.0]), np.array([0.5, 0.5]))


class TestMixture:
    def test_single_component(self, rng):
        F = sample_Fz(NormalComponents([1.5], [2.0]), rng)
        t = np.linspace(-4, 6, 11)
        np.testing.assert_allclose(F.evaluate(t), stats.norm.cdf(t, 1.5, 2.0), atol=1e-15)

    def test_identical_components(self, rng):
        F = sample_Fz(NormalComponents(np.full(6, 0.7), np.full(6, 1.3)), rng)
        assert F.evaluate(1.0) == pytest.approx(stats.norm.cdf(1.0, 0.7, 1.3), abs=1e-14)

    def test_two_components(self, rng):
        F = sample_Fz(NormalComponents([0.0, 2.0], [1.0, 1.0]), rng)
        w = F.weights[0]
        ref = w * special.ndtr(1.0) + (1 - w) * special.ndtr(-1.0)
        assert F.evaluate(1.0) == pytest.approx(ref, abs=1e-15)

    def test_invert_reductions(self):
        F = NormalComponents([0.0], [1.0]).uniform_mixture()
        assert invert_mixture(F, 0.5) == pytest.approx(0.0, abs=1e-12)
        G = NormalComponents([2.0], [3.0]).uniform_mixture()
        assert invert_mixture(G, 0.9) == pytest.approx(stats.norm.ppf(0.9, 2.0, 3.0), abs=1e-10)
        H = NormalComponents([0.0, 4.0], [1.0, 1.0]).uniform_mixture()
        assert invert_mixture(H, 0.5) == pytest.approx(2.0, abs=1e-10)

    def test_against_bisection_oracle(self, rng):
        comps = NormalComponents(rng.normal(0, 2, 15), rng.uniform(0.5, 2, 15))
        F = sample_Fz(comps, rng)
        p = rng.uniform(0.001, 0.999, 30)
        got = F.invert(p)
        ref = np.array([bisection_quantile(F, v) for v in p])
        np.testing.assert_allclose(got, ref, atol=1e-8)

    def test_table_path(self, rng):
        K = 100
        comps = NormalComponents(rng.normal(0, 2, (40, K)), rng.uniform(0.5, 3, (40, K)))
        F = sample_Fz(comps, rng)
        p = np.sort(rng.uniform(0.01, 0.99, 50))
        np.testing.assert_allclose(F.invert(p, "table"), F.invert(p, "exact"), atol=1e-6)

    def test_domain(self):
        F = NormalComponents([0.0], [1.0]).uniform_mixture()
        with pytest.raises(DomainError):
            F.invert(1.0)
        with pytest.raises(DomainError):
            F.invert(0.5, method="nope")

    def test_bad_components(self):
        with pytest.raises(NumericalError):
            NormalComponents([0.0], [0.0])
        with pytest.raises(DomainError):
            MixtureCdf(np.array([0.2, 0.2]), NormalComponents([0.0, 1.0], [1.0, 1.0]))


class TestMonotoneMap:
    def test_linear_reproduced(self):
        t = np.linspace(-2, 3, 8)
        g = fit_monotone_interpolant(t, 2 * t + 1)
        x = np.linspace(-2, 3, 1000)
        np.testing.assert_allclose(g(x), 2 * x + 1, atol=1e-12)

    def test_flat_segment(self):
        g = MonotoneMap(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 1.0, 1.0, 2.0]))
        x = np.linspace(1.0, 2.0, 50)
        np.testing.assert_allclose(g(x), 1.0, atol=1e-15)

    def test_cubic_accuracy(self):
        t = np.linspace(-1, 1, 21)
        g = MonotoneMap(t, t**3)
        x = np.linspace(-1, 1, 1000)
        assert np.max(np.abs(g(x) - x**3)) < 1e-2
        assert np.all(np.diff(g(x)) >= 0)

    def test_inverse(self):
        t = np.linspace(-1, 1, 21)
        g = MonotoneMap(t, t**3 + t)
        x = np.linspace(-0.99, 0.99, 300)
        np.testing.assert_allclose(inverse_map(g, g(x)), x, atol=1e-6)
        assert g.inverse(100.0) == 1.0
        assert g.inverse(-100.0) == -1.0
        ident = MonotoneMap(t, t)
        np.testing.assert_allclose(ident.inverse(x), x, atol=1e-12)

    def test_linear_extension(self):
        t = np.linspace(0, 1, 5)
        g = MonotoneMap(t, 2 * t, extension="linear")
        assert g(2.0) == pytest.approx(4.0)
        assert g.inverse(-2.0) == pytest.approx(-1.0)

    def test_csv_roundtrip(self):
        g = MonotoneMap(np.array([0.0, 0.5, 2.0]), np.array([-1.0, 0.1, 3.0]), extension="linear")
        h = MonotoneMap.from_csv(g.to_csv())
        np.testing.assert_array_equal(h.knots_t, g.knots_t)
        np.testing.assert_array_equal(h.knots_g, g.knots_g)
        assert h.extension == "linear"

    def test_validation(self):
        with pytest.raises(DomainError):
            MonotoneMap(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        with pytest.raises(DomainError):
            MonotoneMap(np.array([0.0]), np.array([0.0]))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=30), st.integers(0, 2**31))
    def test_property_monotone(self, incs, seed):
        r = np.random.default_rng(seed)
        t = np.cumsum(r.uniform(0.01, 2, len(incs)))
        g = MonotoneMap(t, np.cumsum(incs))
        x = np.linspace(t[0] - 1, t[-1] + 1, 1000)
        v = g(x)
        assert np.all(np.diff(v) >= -1e-12 * max(1.0, np.abs(v).max()))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=30), st.integers(0, 2**31))
    def test_property_roundtrip(self, incs, seed):
        r = np.random.default_rng(seed)
        t = np.cumsum(r.uniform(0.01, 2, len(incs)))
        g = MonotoneMap(t, np.cumsum(incs))
        x = r.uniform(t[0], t[-1], 50)
        np.testing.assert_allclose(g.inverse(g(x)), x, atol=1e-6 * (t[-1] - t[0]))


class TestCompose:
    def test_brute_force(self):
        for seed in range(5):
            r = np.random.default_rng(seed)
            n = 20
            y = np.round(r.normal(size=n), 1)  # forces ties
            comps = NormalComponents(r.normal(size=n), r.uniform(0.5, 2, n))
            Fz, Fy = sample_Fz(comps, r), sample_Fy(y, r)
            g = compose_transform(Fz, Fy, n)
            ref = [bisection_quantile(Fz, n / (n + 1) * Fy.evaluate(a)) for a in Fy.atoms]
            np.testing.assert_allclose(g.knots_g, ref, atol=1e-9)
            np.testing.assert_array_equal(g.knots_t, np.unique(y))

    def test_identity_limit(self):
        errs = []
        for n in (50, 2000):
            y = np.random.default_rng(n).normal(size=n)
            g = compose_transform(NormalComponents([0.0], [1.0]).uniform_mixture(), empirical_Fy(y), n)
            errs.append(np.max(np.abs(g.knots_g - special.ndtri(n / (n + 1) * empirical_Fy(y).cumulative))))
            assert np.isfinite(g.knots_g[-1])
            inner = (y > -1.5) & (y < 1.5)
            errs.append(np.max(np.abs(g.at(y[inner]) - y[inner])))
        assert errs[0] < 1e-10 and errs[2] < 1e-10
        assert errs[3] < errs[1]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 60), st.integers(0, 2**31))
    def test_property_monotone(self, n, seed):
        r = np.random.default_rng(seed)
        y = r.exponential(size=n)
        comps = NormalComponents(r.normal(size=n), r.uniform(0.2, 3, n))
        g = compose_transform(sample_Fz(comps, r), sample_Fy(y, r), n)
        assert np.all(np.diff(g.knots_g) >= 0)
        grid = np.linspace(y.min(), y.max(), 1000)
        assert np.all(np.diff(g(grid)) >= 0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 40), st.floats(-5, 5), st.floats(0.1, 10), st.integers(0, 2**31))
    def test_location_scale_law(self, n, mu, sigma, seed):
        r = np.random.default_rng(seed)
        y = r.normal(size=n)
        comps = NormalComponents(r.normal(size=n), r.uniform(0.2, 3, n))
        Fz, Fy = sample_Fz(comps, r), sample_Fy(y, r)
        g = compose_transform(Fz, Fy, n)
        shifted = compose_transform(MixtureCdf(Fz.weights, comps.affine(mu, sigma)), Fy, n)
        np.testing.assert_allclose(location_scale_map(g, mu, sigma).knots_g, shifted.knots_g, atol=1e-8 * max(1, sigma))


class TestLocationScale:
    def test_identity(self):
        g = MonotoneMap(np.array([0.0, 1.0, 3.0]), np.array([0.0, 2.0, 2.5]))
        x = np.linspace(-1, 4, 100)
        np.testing.assert_array_equal(location_scale_map(g, 0.0, 1.0)(x), g(x))

    def test_affine(self):
        g = MonotoneMap(np.array([0.0, 1.0, 3.0, 4.0]), np.array([0.0, 2.0, 2.5, 7.0]))
        h = location_scale_map(g, 2.0, 3.0)
        np.testing.assert_allclose(h.knots_g, 2 + 3 * g.knots_g, rtol=0, atol=0)
        x = np.linspace(-1, 5, 1000)
        np.testing.assert_allclose(h(x), 2 + 3 * g(x), atol=1e-10)
        z = np.linspace(0.1, 6.9, 50)
        np.testing.assert_allclose(h.inverse(2 + 3 * z), g.inverse(z), atol=1e-10)

    def test_sigma_positive(self):
        g = MonotoneMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        with pytest.raises(DomainError):
            location_scale_map(g, 0.0, 0.0)


class TestPointEstimate:
    def test_identity_data(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=2000)
        X = rng.normal(size=(2000, 1))
        prior = ApproxPosterior(np.zeros(1), np.zeros((1, 1)))
        g, approx = point_estimate_transform(y, lambda a: NormalComponents(X @ a.mean, np.ones(2000)), prior=prior)
        lo, hi = np.quantile(y, [0.05, 0.95])
        keep = (y > lo) & (y < hi)
        gy = g.at(y[keep])
        A = np.column_stack([np.ones(keep.sum()), y[keep]])
        fit = A @ np.linalg.lstsq(A, gy, rcond=None)[0]
        assert np.max(np.abs(gy - fit)) < 0.1
        assert approx is prior
        assert np.isfinite(g.at(np.array([y.max()]))[0])

    def test_plugin_finite(self):
        g = plugin_transform(np.array([1.0, 2.0, 3.0]))
        assert np.all(np.isfinite(g.knots_g))

    def test_requires_source(self):
        with pytest.raises(DomainError):
            point_estimate_transform(np.arange(3.0), lambda a: None)

    def test_approx_validation(self):
        with pytest.raises(NumericalError):
            ApproxPosterior(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(NumericalError):
            ApproxPosterior(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestSir:
    def test_uniform(self):
        rng = np.random.default_rng(0)
        counts = np.zeros(10)
        for _ in range(10**4):
            counts += np.bincount(sir_resample(np.zeros(10), 5, rng).indices, minlength=10)
        assert stats.chisquare(counts).pvalue > 0.001

    def test_zero_weight_never_drawn(self, rng):
        lw = np.array([0.0, -np.inf, 0.0, 0.0])
        r = sir_resample(lw, 3, rng)
        for _ in range(2000):
            assert 1 not in sir_resample(lw, 3, rng).indices
        assert r.ess == pytest.approx(3.0)

    def test_probabilities(self):
        rng = np.random.default_rng(1)
        lw = np.log([2.0, 1.0, 1.0])
        idx = np.concatenate([sir_resample(lw, 2, rng).indices for _ in range(50000)])
        assert np.mean(idx == 0) == pytest.approx(0.5, abs=0.005)

    def test_uniform_keeps_distribution(self, rng):
        x = rng.normal(size=2000)
        r = sir_resample(np.zeros(x.size), 1000, rng)
        assert stats.ks_2samp(x, x[r.indices]).pvalue > 0.01

    def test_errors(self, rng):
        with pytest.raises(DegenerateWeightsError):
            sir_resample(np.full(3, -np.inf), 2, rng)
        with pytest.raises(DomainError):
            sir_resample(np.zeros(3), 3, rng)

    def test_ess(self):
        assert effective_sample_size(np.zeros(7)) == pytest.approx(7.0)
        assert effective_sample_size(np.array([0.0, -1e9])) == pytest.approx(1.0)


def test_substreams_are_reproducible_and_distinct():
    a = substream(5, 1, 2).random(3)
    b = substream(5, 1, 2).random(3)
    c = substream(5, 1, 3).random(3)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
