"""Semiparametric Bayesian linear regression under a g-prior.

The latent model is ``z = x'theta + sigma * eps`` with a Zellner prior
``theta ~ N(0, psi sigma^2 (X'X)^-1)`` and ``sigma^-2 ~ Gamma(a, b)``. The
transformation is drawn by the Bayesian bootstrap using the identified
model (no intercept, unit scale); the intercept and scale come back in the
conjugate ``(sigma, theta)`` step, which keeps inference robust to the
choice of latent location and scale.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg, special

from . import kernels
from .data import Dataset
from .errors import ConfigError, DomainError, InputError, NumericalError
from .transform import (
    ApproxPosterior,
    ApproxSource,
    MonotoneMap,
    NormalComponents,
    SirResult,
    compose_transform,
    point_estimate_transform,
    sample_Fy,
    sample_Fz,
    sir_resample,
    substream,
)


class SblmApprox(str, enum.Enum):
    PRIOR = "prior"
    LAPLACE = "laplace"


@dataclass
class SblmConfig:
    """Settings for :func:`sblm_run`.

    ``psi=None`` means ``psi = n``. ``sir_keep=None`` keeps half the draws.
    """

    psi: Optional[float] = None
    a_sigma: float = 0.001
    b_sigma: float = 0.001
    approx_source: SblmApprox = SblmApprox.LAPLACE
    num_draws: int = 1000
    sir_enabled: bool = False
    sir_keep: Optional[int] = None
    num_prior_draws: int = 1000
    extension: str = "clamp"
    inversion: str = "auto"
    workers: int = 1

    def __post_init__(self):
        self.approx_source = SblmApprox(self.approx_source)
        if self.psi is not None and not self.psi > 0:
            raise ConfigError("psi must be positive")
        if not (self.a_sigma > 0 and self.b_sigma > 0):
            raise ConfigError("a_sigma and b_sigma must be positive")
        if self.num_draws < 1:
            raise ConfigError("num_draws must be at least 1")
        if self.num_prior_draws < 1:
            raise ConfigError("num_prior_draws must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.sir_enabled:
            keep = self.keep
            if not 0 < keep < self.num_draws:
                raise ConfigError("sir_keep must satisfy 0 < sir_keep < num_draws")

    @property
    def keep(self) -> int:
        return self.sir_keep if self.sir_keep is not None else max(1, self.num_draws // 2)


@dataclass
class SblmDraws:
    g_draws: List[MonotoneMap]
    theta_draws: np.ndarray
    sigma_draws: np.ndarray
    predictive_draws: np.ndarray
    log_imp_weights: Optional[np.ndarray] = None
    sir: Optional[SirResult] = None
    approx: Optional[ApproxPosterior] = field(default=None, repr=False)
    psi: float = 1.0

    def resampled(self) -> "SblmDraws":
        """Draws selected by importance resampling (requires SIR)."""
        if self.sir is None:
            raise DomainError("no importance resampling was run")
        idx = self.sir.indices
        return SblmDraws(
            [self.g_draws[i] for i in idx],
            self.theta_draws[idx],
            self.sigma_draws[idx],
            self.predictive_draws[idx],
            None if self.log_imp_weights is None else self.log_imp_weights[idx],
            None,
            self.approx,
            self.psi,
        )


# ---------------------------------------------------------------------------
# plug-in approximations and latent components
# ---------------------------------------------------------------------------


def _gram_cholesky(X):
    try:
        return linalg.cho_factor(X.T @ X, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("design matrix is not of full column rank") from exc


def _check_full_rank(X):
    if X.shape[1] and np.linalg.matrix_rank(X) < X.shape[1]:
        raise NumericalError("design matrix is not of full column rank")


def sblm_prior_approx(X, psi: float) -> ApproxPosterior:
    """Prior moments of theta in the identified model: ``N(0, psi (X'X)^-1)``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d == 0:
        return ApproxPosterior(np.zeros(0), np.zeros((0, 0)), ApproxSource.PRIOR)
    _check_full_rank(X)
    cf = _gram_cholesky(X)
    return ApproxPosterior(np.zeros(d), psi * linalg.cho_solve(cf, np.eye(d)), ApproxSource.PRIOR)


def sblm_laplace_approx(X, z, psi: float) -> ApproxPosterior:
    """Posterior moments of theta given transformed data ``z`` at unit scale."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d == 0:
        return ApproxPosterior(np.zeros(0), np.zeros((0, 0)), ApproxSource.LAPLACE)
    _check_full_rank(X)
    cf = _gram_cholesky(X)
    cov = psi / (1.0 + psi) * linalg.cho_solve(cf, np.eye(d))
    return ApproxPosterior(cov @ (X.T @ z), cov, ApproxSource.LAPLACE)


def sblm_fzx_components(X, approx: ApproxPosterior) -> NormalComponents:
    """Component ``i`` is ``N(x_i'theta_hat, 1 + x_i' Sigma x_i)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != approx.mean.size:
        raise DomainError("design and approximation dimensions disagree")
    if X.shape[1] == 0:
        return NormalComponents(np.zeros(X.shape[0]), np.ones(X.shape[0]))
    quad = np.einsum("ij,jk,ik->i", X, approx.covariance, X)
    var = 1.0 + quad
    if np.any(var <= 0):
        raise NumericalError("negative predictive variance: covariance is not PSD")
    return NormalComponents(X @ approx.mean, np.sqrt(var))


# ---------------------------------------------------------------------------
# conjugate (sigma, theta) draw
# ---------------------------------------------------------------------------


class _GPriorCache:
    """Cholesky factor of X'X for a design with intercept, shared by all draws."""

    def __init__(self, X1):
        self.X1 = np.asarray(X1, dtype=float)
        _check_full_rank(self.X1)
        self.L = _gram_cholesky(self.X1)

    def project(self, z):
        """``(X'X)^-1 X'z`` and ``z'X(X'X)^-1X'z``."""
        Xtz = self.X1.T @ z
        beta = linalg.cho_solve(self.L, Xtz)
        return beta, float(Xtz @ beta)


def sblm_gamma_parameters(X1, z, psi, a_sigma, b_sigma, cache=None):
    """Shape and rate of the marginal posterior of ``sigma^-2``."""
    cache = cache or _GPriorCache(X1)
    _, q = cache.project(z)
    n = z.size
    rate = b_sigma + 0.5 * (float(z @ z) - psi / (1.0 + psi) * q)
    return a_sigma + 0.5 * n, max(rate, b_sigma)


def sblm_draw_sigma_theta(X1, z, psi, a_sigma, b_sigma, rng, cache=None):
    """Exact draw from ``p(sigma, theta | z)`` under the g-prior.

    ``sigma^-2`` comes from its Gamma marginal, then
    ``theta ~ N(psi/(1+psi) beta_ols, sigma^2 psi/(1+psi) (X'X)^-1)``.
    ``X1`` includes the intercept column.
    """
    cache = cache or _GPriorCache(X1)
    z = np.asarray(z, dtype=float)
    beta, q = cache.project(z)
    shape = a_sigma + 0.5 * z.size
    rate = b_sigma + 0.5 * (float(z @ z) - psi / (1.0 + psi) * q)
    # guards the residual sum of squares against rounding when z lies in span(X)
    rate = max(rate, b_sigma)
    prec = rng.gamma(shape, 1.0 / rate)
    sigma = 1.0 / np.sqrt(prec)
    shrink = psi / (1.0 + psi)
    L = cache.L[0] if cache.L[1] else cache.L[0].T
    eps = rng.standard_normal(beta.size)
    # L lower with L L' = X'X, so L'^-1 eps has covariance (X'X)^-1
    noise = linalg.solve_triangular(L, eps, lower=True, trans="T")
    theta = shrink * beta + sigma * np.sqrt(shrink) * noise
    return float(sigma), theta


# ---------------------------------------------------------------------------
# surrogate-likelihood importance weights
# ---------------------------------------------------------------------------


def sblm_prior_theta_draws(X, psi: float, S: int, rng) -> np.ndarray:
    """Draws of theta from the identified prior ``N(0, psi (X'X)^-1)``."""
    prior = sblm_prior_approx(X, psi)
    d = prior.mean.size
    if d == 0:
        return np.zeros((S, 0))
    C = np.linalg.cholesky(prior.covariance)
    return rng.standard_normal((S, d)) @ C.T


def sblm_log_importance_weight(g, alpha_x, theta_prior_draws, X, y, prior: ApproxPosterior) -> float:
    """Log ratio of the exact to the surrogate marginal likelihood of ``g(y)``.

    Numerator: Monte Carlo average over prior draws of
    ``prod_i sum_j alpha_j N(g(y_i); x_j'theta, 1)``. Denominator: the same
    product with the prior integrated out analytically,
    ``N(g(y_i); x_j'mu, 1 + x_j' Sigma x_j)``. Both use log-sum-exp; the
    result may be ``-inf``.
    """
    X = np.asarray(X, dtype=float)
    z = g.at(y) if isinstance(g, MonotoneMap) else np.asarray(g, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    alpha_x = np.asarray(alpha_x, dtype=float)
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alpha_x)
    thetas = np.asarray(theta_prior_draws, dtype=float)
    if X.shape[1] == 0:
        M = np.zeros((max(1, thetas.shape[0]), X.shape[0]))
    else:
        M = thetas @ X.T
    num = kernels.log_mean_mixture_likelihood(z, np.ascontiguousarray(M), np.ascontiguousarray(log_alpha))
    comps = sblm_fzx_components(X, prior)
    m = comps.means[:, 0]
    v = comps.sds[:, 0] ** 2
    ll = -0.5 * (np.log(2 * np.pi * v)[None, :] + (z[:, None] - m[None, :]) ** 2 / v[None, :])
    den = special.logsumexp(ll + log_alpha[None, :], axis=1).sum()
    return float(num - den)


# ---------------------------------------------------------------------------
# sampler
# ---------------------------------------------------------------------------


def _with_intercept(X):
    return np.column_stack([np.ones(X.shape[0]), X])


def sblm_run(
    dataset: Dataset,
    config: Optional[SblmConfig] = None,
    query_points=None,
    rng: Optional[np.random.Generator] = None,
    *,
    seed: Optional[int] = None,
    latent_scale: float = 1.0,
    latent_shift: float = 0.0,
) -> SblmDraws:
    """Joint Monte Carlo draws of ``(g, sigma, theta, y_tilde)``.

    Each draw is independent: a Bayesian bootstrap transformation, then the
    exact conjugate ``(sigma, theta)`` draw given ``z = g(y)`` with the
    intercept restored, then ``y_tilde = g^-1(x'theta + sigma eps)`` at
    every query point. Draw ``s`` uses its own substream of ``seed`` so the
    result does not depend on ``config.workers``.

    ``latent_shift`` and ``latent_scale`` deliberately misstate the latent
    location and scale of the identified model; the restored intercept and
    scale absorb them.
    """
    config = config or SblmConfig()
    if seed is None:
        rng = rng if rng is not None else np.random.default_rng()
        seed = int(rng.integers(0, 2**63 - 1))
    X = np.asarray(dataset.X, dtype=float)
    y = dataset.y
    n, d = X.shape
    if n <= d + 1:
        raise InputError(f"need more observations ({n}) than coefficients ({d + 1})")
    Xq = X if query_points is None else np.asarray(query_points, dtype=float).reshape(-1, d)
    psi = float(config.psi) if config.psi is not None else float(n)

    prior = sblm_prior_approx(X, psi)
    if config.approx_source == SblmApprox.PRIOR:
        approx = prior
    else:
        _, approx = point_estimate_transform(
            y,
            lambda a: sblm_fzx_components(X, a),
            posterior_from=lambda z: sblm_laplace_approx(X, z, psi),
            extension=config.extension,
        )
    comps = sblm_fzx_components(X, approx)
    if latent_scale != 1.0 or latent_shift != 0.0:
        comps = comps.affine(latent_shift, latent_scale)

    X1 = _with_intercept(X)
    Xq1 = _with_intercept(Xq)
    cache = _GPriorCache(X1)
    atoms, inverse = np.unique(y, return_inverse=True)
    theta_prior = None
    if config.sir_enabled:
        theta_prior = sblm_prior_theta_draws(X, psi, config.num_prior_draws, substream(seed, 0, 1))

    def one(s):
        r = substream(seed, 1, s)
        Fz = sample_Fz(comps, r)
        Fy = sample_Fy(y, r)
        g = compose_transform(Fz, Fy, n, method=config.inversion, extension=config.extension)
        z = g.knots_g[inverse]
        sigma, theta = sblm_draw_sigma_theta(X1, z, psi, config.a_sigma, config.b_sigma, r, cache)
        zq = Xq1 @ theta + sigma * r.standard_normal(Xq1.shape[0])
        ytilde = g.inverse(zq)
        lw = np.nan
        if theta_prior is not None:
            lw = sblm_log_importance_weight(z, Fz.weights, theta_prior, X, y, prior)
        return g, theta, sigma, ytilde, lw

    S = config.num_draws
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            results = list(ex.map(one, range(S)))
    else:
        results = [one(s) for s in range(S)]

    draws = SblmDraws(
        g_draws=[r[0] for r in results],
        theta_draws=np.array([r[1] for r in results]),
        sigma_draws=np.array([r[2] for r in results]),
        predictive_draws=np.array([r[3] for r in results]),
        approx=approx,
        psi=psi,
    )
    if config.sir_enabled:
        draws.log_imp_weights = np.array([r[4] for r in results])
        draws.sir = sir_resample(draws.log_imp_weights, config.keep, substream(seed, 0, 2))
    return draws


def posterior_mean_transform(g_draws, t) -> np.ndarray:
    """Pointwise average of transformation draws at ``t``."""
    t = np.asarray(t, dtype=float)
    return np.mean([g(t) for g in g_draws], axis=0)
