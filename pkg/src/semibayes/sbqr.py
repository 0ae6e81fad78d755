"""Semiparametric Bayesian quantile regression.

The latent model is linear with asymmetric Laplace errors, written through
the exponential-normal expansion ``z = x'theta + a xi + b sqrt(xi) eta``.
Given a transformation draw ``g``, the pair ``(theta, xi)`` is updated by
Gibbs steps. The transformation itself is drawn afresh at every iteration
by the Bayesian bootstrap, independently of the chain state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg, optimize, special

from . import kernels
from .data import Dataset
from .dist import ald_expansion_constants
from .errors import ConfigError, DomainError, InputError, NumericalError
from .transform import (
    ApproxPosterior,
    ApproxSource,
    MonotoneMap,
    NormalComponents,
    compose_transform,
    point_estimate_transform,
    sample_Fy,
    sample_Fz,
    substream,
)


class SbqrApprox(str, enum.Enum):
    PRIOR = "prior"
    PLUGIN_QR = "plugin_qr"


@dataclass
class SbqrConfig:
    """Settings for :func:`sbqr_run`.

    ``prior_mean`` and ``prior_cov`` refer to the coefficients including the
    intercept; left as ``None`` they give the g-prior ``N(0, n (X'X)^-1)``.
    """

    tau: float = 0.5
    prior_mean: Optional[np.ndarray] = None
    prior_cov: Optional[np.ndarray] = None
    S_xi: int = 100
    num_draws: int = 1000
    burn_in: int = 1000
    approx_source: SbqrApprox = SbqrApprox.PRIOR
    store_xi: bool = False
    extension: str = "clamp"
    inversion: str = "auto"

    def __post_init__(self):
        self.approx_source = SbqrApprox(self.approx_source)
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie strictly inside (0, 1)")
        if self.S_xi < 1:
            raise ConfigError("S_xi must be at least 1")
        if self.num_draws < 1 or self.burn_in < 0:
            raise ConfigError("num_draws must be positive and burn_in nonnegative")


@dataclass
class SbqrDraws:
    g_draws: List[MonotoneMap]
    theta_draws: np.ndarray
    predictive_draws: np.ndarray
    quantile_estimates: np.ndarray
    xi_draws: Optional[np.ndarray] = None
    approx: Optional[ApproxPosterior] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# latent components
# ---------------------------------------------------------------------------


def sbqr_fzx_components(X, approx: ApproxPosterior, tau: float, S_xi: int, rng=None, xi=None) -> NormalComponents:
    """Component ``i`` averages ``N(x_i'theta + a xi_s, b^2 xi_s + x_i' Sigma x_i)`` over ``xi_s``.

    The ``S_xi`` exponential draws are shared by all components; pass ``xi``
    to fix them.
    """
    X = np.asarray(X, dtype=float)
    a, b = ald_expansion_constants(tau)
    if xi is None:
        if rng is None:
            raise DomainError("either rng or xi is required")
        xi = rng.standard_exponential(S_xi)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.any(xi <= 0):
        raise DomainError("mixing draws must be positive")
    if X.shape[1] != approx.mean.size:
        raise DomainError("design and approximation dimensions disagree")
    if X.shape[1]:
        loc = X @ approx.mean
        quad = np.einsum("ij,jk,ik->i", X, approx.covariance, X)
    else:
        loc = np.zeros(X.shape[0])
        quad = np.zeros(X.shape[0])
    if np.any(quad < -1e-12):
        raise NumericalError("negative quadratic form: covariance is not PSD")
    means = loc[:, None] + a * xi[None, :]
    sds = np.sqrt(b * b * xi[None, :] + np.maximum(quad, 0.0)[:, None])
    return NormalComponents(means, sds)


def ald_cdf(t, tau: float):
    """CDF of the unit-scale asymmetric Laplace error with ``tau``-quantile zero."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        left = tau * np.exp((1.0 - tau) * np.minimum(t, 0.0))
        right = 1.0 - (1.0 - tau) * np.exp(-tau * np.maximum(t, 0.0))
    return np.where(t <= 0, left, right)


# ---------------------------------------------------------------------------
# Gibbs steps
# ---------------------------------------------------------------------------


def _mvn_from_precision(Q, ell, rng):
    try:
        L = linalg.cholesky(Q, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("full-conditional precision is singular") from exc
    mean = linalg.cho_solve((L, True), ell)
    return mean + linalg.solve_triangular(L, rng.standard_normal(ell.size), lower=True, trans="T")


def sbqr_theta_conditional(X1, z, xi, tau, prior_mean, prior_prec):
    """Precision and linear term of ``theta | z, xi``."""
    a, b = ald_expansion_constants(tau)
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise DomainError("xi must be positive")
    w = 1.0 / (b * b * xi)
    Q = (X1 * w[:, None]).T @ X1 + prior_prec
    ell = X1.T @ (w * (z - a * xi)) + prior_prec @ prior_mean
    return Q, ell


def sbqr_gibbs_theta(X1, z, xi, tau, prior: ApproxPosterior, rng, prior_prec=None):
    """Draw ``theta ~ N(Q^-1 ell, Q^-1)`` with ``Q = X'W X + Sigma^-1``, ``W = diag(1 / (b^2 xi))``."""
    if prior_prec is None:
        prior_prec = linalg.pinvh(prior.covariance)
    Q, ell = sbqr_theta_conditional(X1, z, xi, tau, prior.mean, prior_prec)
    return _mvn_from_precision(Q, ell, rng)


def sbqr_xi_parameters(residuals, tau):
    """GIG parameters ``(lam, chi, psi)`` of each ``xi_i`` given its residual.

    Completing the square in ``xi^{-1/2} exp{-(r - a xi)^2 / (2 b^2 xi) - xi}``
    gives ``lam = 1/2``, ``chi = r^2 / b^2`` and ``psi = a^2 / b^2 + 2``.
    """
    a, b = ald_expansion_constants(tau)
    r = np.asarray(residuals, dtype=float)
    lam = np.full(r.shape, 0.5)
    chi = r * r / (b * b)
    psi = np.full(r.shape, a * a / (b * b) + 2.0)
    return lam, chi, psi


def sbqr_gibbs_xi(X1, z, theta, tau, rng):
    """Independent GIG draws of the mixing variables given ``theta``."""
    r = np.asarray(z, dtype=float) - np.asarray(X1, dtype=float) @ theta
    lam, chi, psi = sbqr_xi_parameters(r, tau)
    if not (np.all(np.isfinite(chi)) and np.all(chi >= 0)):
        raise NumericalError("invalid GIG parameter chi")
    # chi == 0 (a zero residual) reduces to a Gamma(1/2, psi/2) draw inside the kernel
    out = kernels.sample_gig_vec(
        np.ascontiguousarray(lam), np.ascontiguousarray(chi), np.ascontiguousarray(psi), rng
    )
    # a vanishing draw would make the next precision singular
    return np.maximum(out, np.finfo(float).tiny)


# ---------------------------------------------------------------------------
# plug-in frequentist fit
# ---------------------------------------------------------------------------


def smoothed_pinball(u, tau, h):
    """Check loss convolved with ``N(0, h^2)``, and its derivative."""
    v = u / h
    loss = u * (tau - special.ndtr(-v)) + h * np.exp(-0.5 * v * v) / np.sqrt(2 * np.pi)
    grad = tau - special.ndtr(-v)
    return loss, grad


def pinball_fit(X, z, tau: float, width: Optional[float] = None) -> ApproxPosterior:
    """Quantile regression point estimate with a sandwich covariance.

    Minimizes the smoothed check loss at smoothing ``width`` (default
    ``1e-3 * SD(z)``), reached by continuation from a wide smoothing. The
    covariance is ``tau (1 - tau) A^-1 X'X A^-1`` with ``A`` the kernel
    estimate of ``sum_i f_i(0) x_i x_i'``.
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    n, d = X.shape
    sd = float(np.std(z)) or 1.0
    width = 1e-3 * sd if width is None else width
    theta = np.linalg.lstsq(X, z, rcond=None)[0] if d else np.zeros(0)
    if d == 0:
        return ApproxPosterior(theta, np.zeros((0, 0)), ApproxSource.PLUGIN_QR)

    def objective(th, h):
        loss, grad = smoothed_pinball(z - X @ th, tau, h)
        return loss.sum() / n, -(X.T @ grad) / n

    h = sd
    while True:
        res = optimize.minimize(objective, theta, args=(h,), jac=True, method="L-BFGS-B",
                                options={"maxiter": 1000, "gtol": 1e-10})
        theta = res.x
        if h <= width:
            break
        h = max(width, h / 10.0)
    r = z - X @ theta
    bw = 1.06 * max(np.std(r), 1e-12) * n ** (-0.2)
    f = np.exp(-0.5 * (r / bw) ** 2) / (bw * np.sqrt(2 * np.pi))
    A = (X * f[:, None]).T @ X
    B = tau * (1.0 - tau) * (X.T @ X)
    try:
        Ainv = linalg.inv(A)
    except linalg.LinAlgError as exc:
        raise NumericalError("sandwich bread matrix is singular") from exc
    cov = Ainv @ B @ Ainv
    return ApproxPosterior(theta, 0.5 * (cov + cov.T), ApproxSource.PLUGIN_QR)


# ---------------------------------------------------------------------------
# sampler
# ---------------------------------------------------------------------------


def _with_intercept(X):
    return np.column_stack([np.ones(X.shape[0]), X])


def g_prior(X, scale: float) -> ApproxPosterior:
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d == 0:
        return ApproxPosterior(np.zeros(0), np.zeros((0, 0)), ApproxSource.PRIOR)
    try:
        cov = scale * linalg.inv(X.T @ X)
    except linalg.LinAlgError as exc:
        raise NumericalError("design matrix is not of full column rank") from exc
    return ApproxPosterior(np.zeros(d), 0.5 * (cov + cov.T), ApproxSource.PRIOR)


def _resolve_prior(config: SbqrConfig, X1) -> ApproxPosterior:
    n, d1 = X1.shape
    if config.prior_mean is None and config.prior_cov is None:
        return g_prior(X1, float(n))
    mean = np.zeros(d1) if config.prior_mean is None else np.atleast_1d(np.asarray(config.prior_mean, dtype=float))
    cov = g_prior(X1, float(n)).covariance if config.prior_cov is None else np.atleast_2d(config.prior_cov)
    if mean.size != d1 or cov.shape != (d1, d1):
        raise ConfigError(f"prior must have dimension {d1} (intercept included)")
    return ApproxPosterior(mean, cov, ApproxSource.PRIOR)


def run_gibbs(X1, Xq1, y, draw_g, config: SbqrConfig, rng):
    """Shared chain for the transformed and untransformed samplers.

    ``draw_g(s, rng)`` returns the transformation for iteration ``s`` or
    ``None`` for the identity.
    """
    a, b = ald_expansion_constants(config.tau)
    prior = _resolve_prior(config, X1)
    prior_prec = linalg.pinvh(prior.covariance)
    n = X1.shape[0]
    m = Xq1.shape[0]
    atoms, inverse = np.unique(y, return_inverse=True)
    theta = np.linalg.lstsq(X1, y if draw_g is None else np.zeros(n), rcond=None)[0]
    xi = np.ones(n)
    S = config.num_draws
    g_draws, thetas, preds, qs = [], np.empty((S, X1.shape[1])), np.empty((S, m)), np.empty((S, m))
    xis = np.empty((S, n)) if config.store_xi else None
    for it in range(config.burn_in + S):
        g = draw_g(it) if draw_g is not None else None
        z = y if g is None else g.knots_g[inverse]
        xi = sbqr_gibbs_xi(X1, z, theta, config.tau, rng)
        theta = sbqr_gibbs_theta(X1, z, xi, config.tau, prior, rng, prior_prec)
        k = it - config.burn_in
        if k < 0:
            continue
        xt = rng.standard_exponential(m)
        zq = Xq1 @ theta + a * xt + b * np.sqrt(xt) * rng.standard_normal(m)
        loc = Xq1 @ theta
        if g is None:
            preds[k], qs[k] = zq, loc
        else:
            preds[k], qs[k] = g.inverse(zq), g.inverse(loc)
            g_draws.append(g)
        thetas[k] = theta
        if xis is not None:
            xis[k] = xi
    return g_draws, thetas, preds, qs, xis


def sbqr_run(
    dataset: Dataset,
    config: Optional[SbqrConfig] = None,
    query_points=None,
    rng: Optional[np.random.Generator] = None,
    *,
    seed: Optional[int] = None,
) -> SbqrDraws:
    """Gibbs sampler for ``(theta, xi)`` with a fresh transformation at each iteration.

    Quantile estimates at the query points are posterior means of
    ``g^-1(x'theta)``.
    """
    config = config or SbqrConfig()
    if seed is None:
        rng = rng if rng is not None else np.random.default_rng()
        seed = int(rng.integers(0, 2**63 - 1))
    X = np.asarray(dataset.X, dtype=float)
    y = dataset.y
    n, d = X.shape
    if n <= d + 1:
        raise InputError(f"need more observations ({n}) than coefficients ({d + 1})")
    Xq = X if query_points is None else np.asarray(query_points, dtype=float).reshape(-1, d)
    setup = substream(seed, 0, 0)
    xi_mc = setup.standard_exponential(config.S_xi)
    prior_id = g_prior(X, float(n))
    if config.approx_source == SbqrApprox.PRIOR:
        approx = prior_id
    else:
        _, approx = point_estimate_transform(
            y,
            lambda ap: sbqr_fzx_components(X, ap, config.tau, config.S_xi, xi=xi_mc),
            posterior_from=lambda z: pinball_fit(X, z, config.tau),
            extension=config.extension,
        )
    comps = sbqr_fzx_components(X, approx, config.tau, config.S_xi, xi=xi_mc)

    def draw_g(it):
        r = substream(seed, 1, it)
        return compose_transform(sample_Fz(comps, r), sample_Fy(y, r), n,
                                 method=config.inversion, extension=config.extension)

    g_draws, thetas, preds, qs, xis = run_gibbs(
        _with_intercept(X), _with_intercept(Xq), y, draw_g, config, substream(seed, 2, 0)
    )
    return SbqrDraws(g_draws, thetas, preds, qs.mean(axis=0), xis, approx)


def bqr_run(
    dataset: Dataset,
    config: Optional[SbqrConfig] = None,
    query_points=None,
    rng: Optional[np.random.Generator] = None,
    *,
    seed: Optional[int] = None,
) -> SbqrDraws:
    """The same chain with the transformation fixed at the identity."""
    config = config or SbqrConfig()
    if seed is None:
        rng = rng if rng is not None else np.random.default_rng()
        seed = int(rng.integers(0, 2**63 - 1))
    X = np.asarray(dataset.X, dtype=float)
    n, d = X.shape
    Xq = X if query_points is None else np.asarray(query_points, dtype=float).reshape(-1, d)
    _, thetas, preds, qs, xis = run_gibbs(
        _with_intercept(X), _with_intercept(Xq), dataset.y, None, config, substream(seed, 2, 0)
    )
    return SbqrDraws([], thetas, preds, qs.mean(axis=0), xis, None)
