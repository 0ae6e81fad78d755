"""Bayesian bootstrap draws of the transformation and the machinery around it.

A transformation draw is built from two random distribution functions:
a Dirichlet-weighted step function on the observed responses and a
Dirichlet-weighted mixture of per-observation latent cdfs. Composing the
latter's inverse with the former gives a monotone map evaluated at the
observed responses, which is then interpolated with a Fritsch-Carlson
monotone cubic so that it can be inverted anywhere on the response range.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import kernels
from .dist import sample_dirichlet_flat
from .errors import DegenerateWeightsError, DomainError, InsufficientDataError, NumericalError

EXACT_LIMIT = 512
TABLE_SIZE = 4096


# ---------------------------------------------------------------------------
# latent component cdfs
# ---------------------------------------------------------------------------


class NormalComponents:
    """``n`` component cdfs, component ``i`` an equal-weight mixture of ``K`` normals.

    ``K = 1`` covers the Gaussian families; the quantile family averages over
    ``K`` shared exponential mixing draws.
    """

    def __init__(self, means, sds):
        means = np.asarray(means, dtype=float)
        sds = np.asarray(sds, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if sds.ndim == 1:
            sds = sds[:, None]
        means, sds = np.broadcast_arrays(means, sds)
        if means.shape[0] == 0:
            raise DomainError("at least one component is required")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(sds))):
            raise NumericalError("non-finite component parameters")
        if np.any(sds <= 0):
            raise NumericalError("component standard deviations must be positive")
        self.means = np.ascontiguousarray(means)
        self.sds = np.ascontiguousarray(sds)
        self._table = None

    @property
    def n(self) -> int:
        return self.means.shape[0]

    @property
    def K(self) -> int:
        return self.means.shape[1]

    def cdf(self, t):
        """Evaluate every component at ``t``; returns shape ``t.shape + (n,)``."""
        t = np.asarray(t, dtype=float)
        u = (t[..., None, None] - self.means) / self.sds
        return special.ndtr(u).mean(axis=-1)

    def affine(self, mu: float, sigma: float) -> "NormalComponents":
        """Components of ``mu + sigma * Z`` when ``Z`` has these components."""
        if sigma <= 0:
            raise DomainError("sigma must be positive")
        return NormalComponents(mu + sigma * self.means, sigma * self.sds)

    def uniform_mixture(self) -> "MixtureCdf":
        return MixtureCdf(np.full(self.n, 1.0 / self.n), self)

    def table(self, size: int = TABLE_SIZE):
        """Component cdf and pdf values on a shared grid, computed once."""
        if self._table is None or self._table[0].size != size:
            lo = float(np.min(self.means - 10.0 * self.sds))
            hi = float(np.max(self.means + 10.0 * self.sds))
            grid = np.linspace(lo, hi, size)
            C, D = kernels.component_table(grid, self.means, self.sds)
            self._table = (grid, C, D)
        return self._table


@dataclass
class MixtureCdf:
    """Dirichlet-weighted mixture of component cdfs."""

    weights: np.ndarray
    components: NormalComponents

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.components.n,):
            raise DomainError("one weight per component is required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-10:
            raise DomainError("mixture weights must be a probability vector")

    def _flat(self):
        K = self.components.K
        return (
            self.components.means.ravel(),
            self.components.sds.ravel(),
            np.repeat(self.weights / K, K),
        )

    def evaluate(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        F, _ = kernels.mixture_cdf_pdf(np.ascontiguousarray(t_arr), *self._flat())
        return float(F[0]) if np.ndim(t) == 0 else F.reshape(np.shape(t))

    def pdf(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        _, f = kernels.mixture_cdf_pdf(np.ascontiguousarray(t_arr), *self._flat())
        return float(f[0]) if np.ndim(t) == 0 else f.reshape(np.shape(t))

    def invert(self, p, method: str = "exact"):
        """Quantiles of the mixture.

        ``exact`` runs a bracketed Newton/bisection on the mixture itself.
        ``table`` interpolates the cdf from component tables with a cubic
        Hermite that uses the exact density as slope; it is much cheaper
        when each component carries many sub-normals, at a relative
        accuracy of roughly 1e-7.
        """
        p_arr = np.atleast_1d(np.asarray(p, dtype=float))
        if np.any((p_arr <= 0) | (p_arr >= 1)) or not np.all(np.isfinite(p_arr)):
            raise DomainError("probabilities must lie strictly inside (0, 1)")
        if method == "auto":
            method = "table" if self.components.n * self.components.K > EXACT_LIMIT else "exact"
        if method == "exact":
            out = kernels.invert_mixture_flat(p_arr, *self._flat())
        elif method == "table":
            grid, C, D = self.components.table()
            F = self.weights @ C
            f = self.weights @ D
            F = np.maximum.accumulate(F)
            out = kernels.hermite_inverse(grid, F, f, np.ascontiguousarray(p_arr), False)
        else:
            raise DomainError(f"unknown inversion method {method!r}")
        return float(out[0]) if np.ndim(p) == 0 else out.reshape(np.shape(p))


def sample_Fz(components: NormalComponents, rng: np.random.Generator) -> MixtureCdf:
    """Bayesian bootstrap draw of the latent marginal cdf."""
    return MixtureCdf(sample_dirichlet_flat(components.n, rng), components)


def invert_mixture(F: MixtureCdf, p, method: str = "exact"):
    return F.invert(p, method=method)


# ---------------------------------------------------------------------------
# response cdf
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalCdf:
    """Weighted step function on strictly increasing atoms."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.atoms.size > 1 and np.any(np.diff(self.atoms) <= 0):
            raise DomainError("atoms must be strictly increasing")
        if abs(self.weights.sum() - 1.0) > 1e-12 * max(1, self.atoms.size):
            raise DomainError("weights must sum to one")

    @property
    def cumulative(self) -> np.ndarray:
        return np.minimum(np.cumsum(self.weights), 1.0)

    def evaluate(self, t):
        idx = np.searchsorted(self.atoms, t, side="right")
        cum = np.concatenate([[0.0], self.cumulative])
        out = cum[idx]
        return float(out) if np.ndim(out) == 0 else out


def _merge_ties(y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise DomainError("responses must be a finite vector")
    return np.unique(y, return_inverse=True)


def sample_Fy(y, rng: np.random.Generator) -> EmpiricalCdf:
    """Bayesian bootstrap draw of the response cdf, tied atoms merged."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise InsufficientDataError("at least two responses are needed")
    atoms, inverse = _merge_ties(y)
    alpha = sample_dirichlet_flat(y.size, rng)
    return EmpiricalCdf(atoms, np.bincount(inverse, weights=alpha, minlength=atoms.size))


def empirical_Fy(y) -> EmpiricalCdf:
    y = np.asarray(y, dtype=float)
    atoms, inverse = _merge_ties(y)
    return EmpiricalCdf(atoms, np.bincount(inverse, minlength=atoms.size) / y.size)


# ---------------------------------------------------------------------------
# monotone maps
# ---------------------------------------------------------------------------


def fritsch_carlson_slopes(t: np.ndarray, g: np.ndarray) -> np.ndarray:
    h = np.diff(t)
    delta = np.diff(g) / h
    m = np.empty_like(g)
    m[0] = delta[0]
    m[-1] = delta[-1]
    if g.size > 2:
        avg = 0.5 * (delta[:-1] + delta[1:])
        m[1:-1] = np.where(delta[:-1] * delta[1:] > 0, avg, 0.0)
    flat = delta == 0
    m[:-1][flat] = 0.0
    m[1:][flat] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = m[:-1] / delta
        b = m[1:] / delta
    r = a * a + b * b
    over = ~flat & (r > 9.0)
    tau = np.where(over, 3.0 / np.sqrt(np.where(over, r, 1.0)), 1.0)
    # each interior slope may be limited by both neighbouring intervals
    lim_left = np.ones_like(g)
    lim_right = np.ones_like(g)
    lim_left[:-1] = tau
    lim_right[1:] = tau
    return m * np.minimum(lim_left, lim_right)


EXTENSIONS = ("clamp", "linear")


@dataclass
class MonotoneMap:
    """Monotone cubic Hermite interpolant through ``(knots_t, knots_g)``.

    Outside the knot range the map is either held at the end values
    (``clamp``) or continued with the end slopes (``linear``); the inverse
    follows the same policy.
    """

    knots_t: np.ndarray
    knots_g: np.ndarray
    extension: str = "clamp"
    slopes: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.knots_t = np.ascontiguousarray(self.knots_t, dtype=float)
        self.knots_g = np.ascontiguousarray(self.knots_g, dtype=float)
        if self.extension not in EXTENSIONS:
            raise DomainError(f"extension must be one of {EXTENSIONS}")
        if self.knots_t.size < 2 or self.knots_t.shape != self.knots_g.shape:
            raise DomainError("need at least two knots with matching values")
        if np.any(np.diff(self.knots_t) <= 0):
            raise DomainError("knots_t must be strictly increasing")
        if np.any(np.diff(self.knots_g) < 0):
            raise DomainError("knots_g must be nondecreasing")
        if not np.all(np.isfinite(self.knots_g)):
            raise NumericalError("non-finite transformation values")
        if self.slopes is None:
            self.slopes = fritsch_carlson_slopes(self.knots_t, self.knots_g)
        self.slopes = np.ascontiguousarray(self.slopes, dtype=float)

    @property
    def linear(self) -> bool:
        return self.extension == "linear"

    def __call__(self, t):
        return self.forward(t)

    def forward(self, t):
        t_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(t, dtype=float)).ravel())
        out = kernels.hermite_eval(self.knots_t, self.knots_g, self.slopes, t_arr, self.linear)
        return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))

    def inverse(self, z):
        z_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(z, dtype=float)).ravel())
        out = kernels.hermite_inverse(self.knots_t, self.knots_g, self.slopes, z_arr, self.linear)
        return float(out[0]) if np.ndim(z) == 0 else out.reshape(np.shape(z))

    def at(self, y) -> np.ndarray:
        """Exact knot values for responses that are knots (no interpolation)."""
        idx = np.searchsorted(self.knots_t, y)
        idx = np.clip(idx, 0, self.knots_t.size - 1)
        if not np.array_equal(self.knots_t[idx], np.asarray(y, dtype=float)):
            return self.forward(y)
        return self.knots_g[idx]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# extension={self.extension}\n")
        buf.write("knot_t,knot_g\n")
        for a, b in zip(self.knots_t, self.knots_g):
            buf.write(f"{float(a)!r},{float(b)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MonotoneMap":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# extension="):
            raise DomainError("missing extension header")
        extension = lines[0].split("=", 1)[1].strip()
        if lines[1].strip() != "knot_t,knot_g":
            raise DomainError("missing column header")
        vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
        return cls(vals[:, 0], vals[:, 1], extension=extension)


def fit_monotone_interpolant(knots_t, knots_g, extension: str = "clamp") -> MonotoneMap:
    return MonotoneMap(knots_t, knots_g, extension=extension)


def inverse_map(g: MonotoneMap, z):
    return g.inverse(z)


def compose_transform(
    Fz: MixtureCdf, Fy: EmpiricalCdf, n: int, method: str = "auto", extension: str = "clamp"
) -> MonotoneMap:
    """Transformation draw: latent quantile of the rescaled response cdf, at each atom."""
    if Fy.atoms.size < 2:
        raise InsufficientDataError("the responses take a single value")
    p = (n / (n + 1.0)) * Fy.cumulative
    g = Fz.invert(p, method=method)
    # guard against last-ulp reversals between adjacent roots
    g = np.maximum.accumulate(g)
    return MonotoneMap(Fy.atoms, g, extension=extension)


def location_scale_map(g: MonotoneMap, mu: float, sigma: float) -> MonotoneMap:
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return MonotoneMap(g.knots_t, mu + sigma * g.knots_g, extension=g.extension)


# ---------------------------------------------------------------------------
# plug-in approximations of the parameter posterior
# ---------------------------------------------------------------------------


class ApproxSource(str, enum.Enum):
    PRIOR = "prior"
    LAPLACE = "laplace"
    PLUGIN_QR = "plugin_qr"
    POINT_MASS = "point_mass"


@dataclass
class ApproxPosterior:
    mean: np.ndarray
    covariance: np.ndarray
    source: ApproxSource = ApproxSource.PRIOR

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        d = self.mean.size
        if self.covariance.shape != (d, d):
            raise DomainError("covariance shape does not match the mean")
        if d and np.max(np.abs(self.covariance - self.covariance.T)) > 1e-10 * max(1.0, np.abs(self.covariance).max()):
            raise NumericalError("covariance is not symmetric")
        self.covariance = 0.5 * (self.covariance + self.covariance.T)
        if d and np.linalg.eigvalsh(self.covariance).min() < -1e-10 * max(1.0, np.abs(self.covariance).max()):
            raise NumericalError("covariance is not positive semidefinite")


def plugin_transform(y, extension: str = "clamp") -> MonotoneMap:
    """First-stage point estimate with a standard normal latent marginal."""
    Fy = empirical_Fy(y)
    if Fy.atoms.size < 2:
        raise InsufficientDataError("the responses take a single value")
    n = np.size(y)
    return MonotoneMap(Fy.atoms, special.ndtri(n / (n + 1.0) * Fy.cumulative), extension=extension)


def point_estimate_transform(
    y,
    components_from: Callable[[object], NormalComponents],
    posterior_from: Optional[Callable[[np.ndarray], object]] = None,
    prior: object = None,
    extension: str = "clamp",
):
    """Two-stage plug-in transformation estimate.

    Stage one inverts a standard normal latent marginal at the rescaled
    empirical cdf of ``y``. With ``posterior_from`` given, the parameter
    approximation is fitted to the stage-one transformed data; otherwise
    ``prior`` is used throughout. Stage two averages the resulting latent
    components over the observed covariates, recomputes the transformation
    and refits the approximation.

    Returns the final transformation and parameter approximation.
    """
    y = np.asarray(y, dtype=float)
    if posterior_from is None and prior is None:
        raise DomainError("either a posterior builder or a prior is required")
    g_hat = plugin_transform(y, extension=extension)
    approx = prior if posterior_from is None else posterior_from(g_hat.at(y))
    Fz_hat = components_from(approx).uniform_mixture()
    g_hat = compose_transform(Fz_hat, empirical_Fy(y), y.size, extension=extension)
    if posterior_from is not None:
        approx = posterior_from(g_hat.at(y))
    return g_hat, approx


# ---------------------------------------------------------------------------
# importance resampling
# ---------------------------------------------------------------------------


@dataclass
class SirResult:
    indices: np.ndarray
    weights: np.ndarray
    ess: float


def effective_sample_size(log_weights) -> float:
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - lw.max())
    return float(w.sum() ** 2 / (w * w).sum())


def sir_resample(log_weights, S_star: int, rng: np.random.Generator) -> SirResult:
    lw = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise DomainError("log weights must be finite or -inf")
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all importance weights are zero")
    if not 0 < S_star < lw.size:
        raise DomainError("resample size must satisfy 0 < S_star < S")
    w = np.exp(lw - lw.max())
    w /= w.sum()
    idx = rng.choice(lw.size, size=S_star, replace=True, p=w)
    return SirResult(indices=idx, weights=w, ess=effective_sample_size(lw))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under master ``seed``.

    Uses ``SeedSequence(seed, spawn_key=key)``, so the stream for a given
    counter key does not depend on how work is split across workers.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
