"""Semiparametric Gaussian process regression with Matern kernels.

The latent model is ``z = f(x) + sigma eps`` with
``f ~ GP(m, sigma^2 K)``. ``K`` is measured in units of the noise variance,
so ``z ~ N(m 1, sigma^2 (K + I))`` and the posterior covariance of ``f`` at
the training inputs is ``sigma^2 (K^-1 + I)^-1``. Hyperparameters are fixed
at their maximum likelihood values; the transformation carries the
remaining uncertainty.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist

from .data import Dataset
from .errors import ConfigError, DomainError, FitError, InputError
from .transform import (
    MonotoneMap,
    NormalComponents,
    compose_transform,
    point_estimate_transform,
    sample_Fy,
    sample_Fz,
    substream,
)

SMOOTHNESS_GRID = (0.5, 1.5, 2.5)
JITTER = 1e-8


@dataclass(frozen=True)
class MaternParams:
    """Matern hyperparameters.

    ``variance`` is the signal-to-noise ratio (the kernel in units of
    ``noise_scale**2``); ``noise_scale`` is the error standard deviation.
    """

    variance: float
    range: float
    smoothness: float
    mean_const: float = 0.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if not (self.variance > 0 and self.range > 0 and self.noise_scale > 0):
            raise DomainError("Matern scales must be positive")
        if self.smoothness not in SMOOTHNESS_GRID:
            raise DomainError(f"smoothness must be one of {SMOOTHNESS_GRID}")


def matern_correlation(r, smoothness: float):
    """Closed-form Matern correlation at scaled distance ``r = dist / range``."""
    r = np.asarray(r, dtype=float)
    if smoothness == 0.5:
        return np.exp(-r)
    if smoothness == 1.5:
        s = np.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    if smoothness == 2.5:
        s = np.sqrt(5.0) * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise DomainError(f"smoothness must be one of {SMOOTHNESS_GRID}")


def matern_cov(x1, x2, params: MaternParams) -> float:
    """Kernel value between two points."""
    dist = float(np.linalg.norm(np.atleast_1d(np.asarray(x1, dtype=float)) - np.atleast_1d(np.asarray(x2, dtype=float))))
    return float(params.variance * matern_correlation(dist / params.range, params.smoothness))


def _as_points(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def matern_matrix(X1, X2, params: MaternParams):
    D = cdist(_as_points(X1), _as_points(X2))
    return params.variance * matern_correlation(D / params.range, params.smoothness)


@dataclass
class GpFit:
    params: MaternParams
    fitted_mean: np.ndarray
    cov_diag: np.ndarray
    chol: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    loglik: float = np.nan
    alpha: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = linalg.cho_solve((self.chol, True), self.z - self.params.mean_const)

    def cross(self, Xq):
        return matern_matrix(Xq, self.X, self.params)

    def predict_mean(self, Xq, z=None, mean_const=None):
        """Kriging mean ``m + k' (K + I)^-1 (z - m)``, optionally for new data ``z``."""
        m = self.params.mean_const if mean_const is None else mean_const
        alpha = self.alpha if z is None else linalg.cho_solve((self.chol, True), z - m)
        return m + self.cross(Xq) @ alpha

    def predict_cov(self, Xq):
        """Posterior covariance of ``f`` at ``Xq`` in noise-variance units."""
        k = self.cross(Xq)
        V = linalg.solve_triangular(self.chol, k.T, lower=True)
        return matern_matrix(Xq, Xq, self.params) - V.T @ V

    def predict_var(self, Xq):
        k = self.cross(Xq)
        V = linalg.solve_triangular(self.chol, k.T, lower=True)
        return np.maximum(self.params.variance - np.sum(V * V, axis=0), 0.0)


# ---------------------------------------------------------------------------
# marginal likelihood
# ---------------------------------------------------------------------------


def _profile(D, z, ratio, rng_, nu):
    """Profile log-likelihood with mean and noise variance maximized out."""
    n = z.size
    A = ratio * matern_correlation(D / rng_, nu)
    A[np.diag_indices(n)] += 1.0 + JITTER * ratio
    try:
        L = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        return -np.inf, None
    one = np.ones(n)
    Ai1 = linalg.cho_solve((L, True), one)
    Aiz = linalg.cho_solve((L, True), z)
    m = float(one @ Aiz / (one @ Ai1))
    r = z - m
    rss = float(r @ (Aiz - m * Ai1))
    if not rss > 0:
        return -np.inf, None
    s2 = rss / n
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    ll = -0.5 * n * (np.log(2 * np.pi * s2) + 1.0) - 0.5 * logdet
    return ll, (L, m, s2)


def gp_profile_loglik(X, z, ratio: float, range_: float, smoothness: float) -> float:
    """Log-likelihood of ``z`` maximized over the mean constant and noise variance."""
    D = cdist(_as_points(X), _as_points(X))
    return _profile(D, np.asarray(z, dtype=float), ratio, range_, smoothness)[0]


def gp_loglik(X, z, params: MaternParams) -> float:
    """Gaussian log-likelihood of ``z`` under ``N(m 1, sigma^2 (K + I))``."""
    z = np.asarray(z, dtype=float)
    n = z.size
    A = matern_matrix(X, X, params)
    A[np.diag_indices(n)] += 1.0 + JITTER * params.variance
    L = linalg.cholesky(A, lower=True)
    r = (z - params.mean_const) / params.noise_scale
    w = linalg.solve_triangular(L, r, lower=True)
    return float(
        -0.5 * w @ w - np.sum(np.log(np.diag(L))) - n * np.log(params.noise_scale) - 0.5 * n * np.log(2 * np.pi)
    )


def _fit_from(X, z, params: MaternParams, L, ll) -> GpFit:
    Linv = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    diag_Ainv = np.sum(Linv * Linv, axis=0)
    alpha = linalg.cho_solve((L, True), z - params.mean_const)
    # K (K + I)^-1 r = r - (K + I)^-1 r
    fitted = z - alpha
    cov_diag = np.clip(1.0 - diag_Ainv, np.finfo(float).tiny, 1.0)
    return GpFit(params, fitted, cov_diag, L, np.asarray(X, dtype=float), z, ll, alpha)


def gp_fit_fixed(X, z, params: MaternParams) -> GpFit:
    """Moments of ``f`` at the training inputs for given hyperparameters."""
    z = np.asarray(z, dtype=float)
    A = matern_matrix(X, X, params)
    A[np.diag_indices(z.size)] += 1.0 + JITTER * params.variance
    L = linalg.cholesky(A, lower=True)
    return _fit_from(X, z, params, L, gp_loglik(X, z, params))


def gp_mle_fit(
    X,
    z,
    smoothness_grid: Sequence[float] = SMOOTHNESS_GRID,
    maxiter: int = 500,
) -> GpFit:
    """Maximum likelihood fit over (mean, noise, ratio, range) for each smoothness.

    The mean constant and noise variance are profiled out in closed form;
    Nelder-Mead runs over log ratio and log range from two starting ranges.
    The smoothness with the largest maximized likelihood is kept.
    """
    X = _as_points(X)
    z = np.asarray(z, dtype=float)
    n = z.size
    if n < 10:
        raise InputError("at least 10 observations are needed for a GP fit")
    D = cdist(X, X)
    pos = D[D > 0]
    if pos.size == 0:
        raise InputError("all inputs coincide")
    dmax = float(pos.max())
    # below the typical spacing of the inputs the kernel is confounded with the noise
    Dn = D + np.where(D > 0, 0.0, np.inf)
    spacing = float(np.median(Dn.min(axis=1)))
    if not np.isfinite(spacing):
        spacing = float(pos.min())
    lo = np.array([np.log(1e-6), np.log(spacing)])
    hi = np.array([np.log(1e6), np.log(dmax * 1e2)])

    best = None
    diagnostics = []
    for nu in smoothness_grid:

        def negll(v, nu=nu):
            v = np.clip(v, lo, hi)
            ll, _ = _profile(D, z, np.exp(v[0]), np.exp(v[1]), nu)
            return 1e300 if not np.isfinite(ll) else -ll

        for start_range in (0.1 * dmax, 0.5 * dmax):
            res = optimize.minimize(
                negll,
                np.array([0.0, np.log(start_range)]),
                method="Nelder-Mead",
                options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-9},
            )
            diagnostics.append({"smoothness": nu, "start_range": start_range, "success": bool(res.success),
                                "nit": int(res.nit), "negloglik": float(res.fun)})
            if not res.success:
                continue
            if best is None or res.fun < best[0]:
                best = (res.fun, nu, np.clip(res.x, lo, hi))
    if best is None:
        raise FitError("GP likelihood optimization did not converge", diagnostics)
    _, nu, v = best
    ratio, range_ = float(np.exp(v[0])), float(np.exp(v[1]))
    ll, (L, m, s2) = _profile(D, z, ratio, range_, nu)
    params = MaternParams(ratio, range_, nu, m, float(np.sqrt(s2)))
    return _fit_from(X, z, params, L, ll)


# ---------------------------------------------------------------------------
# transformation model
# ---------------------------------------------------------------------------


def sbgp_fzx_components(fit: GpFit) -> NormalComponents:
    """Component ``i`` is ``N(f_hat_i, sigma_hat^2 (1 + Sigma_ii))``."""
    s = fit.params.noise_scale
    return NormalComponents(fit.fitted_mean, s * np.sqrt(1.0 + fit.cov_diag))


class SbgpMode(str, enum.Enum):
    FAST = "fast"
    SAMPLE_F = "sample_f"


@dataclass
class SbgpConfig:
    num_draws: int = 1000
    mode: SbgpMode = SbgpMode.FAST
    smoothness_grid: Sequence[float] = SMOOTHNESS_GRID
    maxiter: int = 500
    extension: str = "clamp"
    inversion: str = "auto"

    def __post_init__(self):
        self.mode = SbgpMode(self.mode)
        if self.num_draws < 1:
            raise ConfigError("num_draws must be at least 1")
        if not self.smoothness_grid or any(nu not in SMOOTHNESS_GRID for nu in self.smoothness_grid):
            raise ConfigError(f"smoothness values must come from {SMOOTHNESS_GRID}")


@dataclass
class SbgpDraws:
    g_draws: List[MonotoneMap]
    predictive_draws: np.ndarray
    fit: GpFit
    f_draws: Optional[np.ndarray] = None


def sbgp_run(
    dataset: Dataset,
    query_points=None,
    config: Optional[SbgpConfig] = None,
    rng: Optional[np.random.Generator] = None,
    *,
    seed: Optional[int] = None,
) -> SbgpDraws:
    """Transformation draws with GP hyperparameters fixed at their MLE.

    Fast mode predicts with ``N(f_hat(x), sigma_hat^2)`` from the fit to
    ``g_hat(y)``. ``sample_f`` mode replaces ``f_hat`` by a joint draw
    ``f ~ N(f_hat, sigma_hat^2 Sigma_f)`` at the query points for each draw.
    """
    config = config or SbgpConfig()
    if seed is None:
        rng = rng if rng is not None else np.random.default_rng()
        seed = int(rng.integers(0, 2**63 - 1))
    X = _as_points(dataset.X)
    y = dataset.y
    n = y.size
    Xq = X if query_points is None else _as_points(query_points)
    if Xq.shape[1] != X.shape[1]:
        raise InputError("query points have the wrong dimension")

    def fit_to(z):
        return gp_mle_fit(X, z, config.smoothness_grid, config.maxiter)

    _, fit = point_estimate_transform(y, sbgp_fzx_components, posterior_from=fit_to, extension=config.extension)
    comps = sbgp_fzx_components(fit)
    s_hat = fit.params.noise_scale
    f_fast = fit.predict_mean(Xq)
    Lq = None
    if config.mode == SbgpMode.SAMPLE_F:
        w, V = linalg.eigh(fit.predict_cov(Xq))
        Lq = V * np.sqrt(np.clip(w, 0.0, None))

    m = Xq.shape[0]
    S = config.num_draws
    preds = np.empty((S, m))
    f_draws = np.empty((S, m)) if Lq is not None else None
    g_draws = []
    for s in range(S):
        r = substream(seed, 1, s)
        g = compose_transform(sample_Fz(comps, r), sample_Fy(y, r), n,
                              method=config.inversion, extension=config.extension)
        if Lq is None:
            f = f_fast
        else:
            f = f_fast + s_hat * (Lq @ r.standard_normal(m))
            f_draws[s] = f
        preds[s] = g.inverse(f + s_hat * r.standard_normal(m))
        g_draws.append(g)
    return SbgpDraws(g_draws, preds, fit, f_draws)


def gp_predictive_draws(fit: GpFit, Xq, S: int, rng) -> np.ndarray:
    """Kriging predictive ``N(f_hat(x), sigma^2 (1 + Var f(x)))`` with no transformation."""
    mean = fit.predict_mean(Xq)
    sd = fit.params.noise_scale * np.sqrt(1.0 + fit.predict_var(Xq))
    return mean + sd * rng.standard_normal((S, mean.size))
