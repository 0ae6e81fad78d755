"""Simulation designs, comparison baselines and evaluation metrics."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg, special

from .data import Dataset
from .errors import ConfigError, DomainError
from .sbgp import SbgpConfig, gp_mle_fit, gp_predictive_draws, sbgp_run
from .sblm import SblmApprox, SblmConfig, _GPriorCache, sblm_draw_sigma_theta, sblm_run
from .sbqr import SbqrConfig, bqr_run, sbqr_run
from .transform import substream

BETA_SHAPES = (0.1, 0.5)
BOXCOX_LAMBDA = 0.5
STEP_KNOTS = np.linspace(-3.0, 3.0, 10)


class TransformKind(str, enum.Enum):
    BETA = "beta"
    STEP = "step"
    BOXCOX = "boxcox"
    IDENTITY = "identity"


@dataclass
class SimDesign:
    n: int
    p: int
    transform_kind: TransformKind = TransformKind.IDENTITY
    heteroskedastic: bool = False
    error_sd: float = 1.0
    seed: int = 0
    n_test: int = 1000

    def __post_init__(self):
        self.transform_kind = TransformKind(self.transform_kind)
        if self.n < 1 or self.p < 1 or self.n_test < 0:
            raise ConfigError("n and p must be positive")
        if not self.error_sd > 0:
            raise ConfigError("error_sd must be positive")

    @classmethod
    def named(cls, name: str, n: int, p: int, **kw) -> "SimDesign":
        """Designs by name: ``beta``, ``step``, ``boxcox``, ``identity`` or ``hetero``."""
        if name == "hetero":
            return cls(n, p, TransformKind.IDENTITY, heteroskedastic=True, **kw)
        try:
            return cls(n, p, TransformKind(name), **kw)
        except ValueError as exc:
            raise ConfigError(f"unknown design {name!r}") from exc


@dataclass
class MetricReport:
    interval_width: float = math.nan
    coverage: float = math.nan
    crps: float = math.nan
    tpr: float = math.nan
    tnr: float = math.nan
    quantile_calibration: float = math.nan

    def __post_init__(self):
        for name in ("coverage", "tpr", "tnr", "quantile_calibration"):
            v = getattr(self, name)
            if not (math.isnan(v) or 0.0 <= v <= 1.0):
                raise DomainError(f"{name} must be a proportion")


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------


def ar1_correlation(p: int, rho: float = 0.75) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def gen_covariates(n: int, p: int, rng, rho: float = 0.75, permute: bool = True) -> np.ndarray:
    """Rows ``N(0, R)`` with ``R_jk = rho^|j-k|``, columns permuted once."""
    if n < 1 or p < 1:
        raise DomainError("n and p must be positive")
    L = np.linalg.cholesky(ar1_correlation(p, rho))
    X = rng.standard_normal((n, p)) @ L.T
    if permute:
        X = X[:, rng.permutation(p)]
    return X


class StepTransform:
    """Piecewise-linear increasing map through cumulative exponential sums.

    ``inverse`` sends latent ``z`` to the response; beyond ``[-3, 3]`` the
    response is held at the end values.
    """

    def __init__(self, rng=None, increments=None):
        if increments is None:
            increments = rng.standard_exponential(STEP_KNOTS.size)
        self.increments = np.asarray(increments, dtype=float)
        self.knots = STEP_KNOTS
        self.values = np.cumsum(self.increments)

    def inverse(self, z):
        return np.interp(z, self.knots, self.values)

    def forward(self, y):
        return np.interp(y, self.values, self.knots)


def inv_transform_step(z, increments):
    """Step-design inverse transformation for given increments."""
    return StepTransform(increments=increments).inverse(z)


def boxcox(y, lam: float):
    """Signed Box-Cox map ``(sign(y)|y|^lam - 1) / lam``."""
    y = np.asarray(y, dtype=float)
    return (np.sign(y) * np.abs(y) ** lam - 1.0) / lam


def inv_boxcox(z, lam: float):
    s = lam * np.asarray(z, dtype=float) + 1.0
    return np.sign(s) * np.abs(s) ** (1.0 / lam)


def boxcox_log_jacobian(y, lam: float) -> float:
    return float((lam - 1.0) * np.sum(np.log(np.abs(y))))


@dataclass
class SimData:
    train: Dataset
    X_test: np.ndarray
    y_test: np.ndarray
    z_train: np.ndarray
    z_test: np.ndarray
    theta_true: np.ndarray
    g_true: Callable = dataclasses.field(repr=False)
    g_inv: Callable = dataclasses.field(repr=False)


def _transform_pair(design: SimDesign, rng):
    kind = design.transform_kind
    if kind == TransformKind.BETA:
        a, b = BETA_SHAPES
        inv = lambda z: special.betaincinv(a, b, special.ndtr(z))
        fwd = lambda y: special.ndtri(special.betainc(a, b, y))
        return fwd, inv, "unit"
    if kind == TransformKind.STEP:
        st = StepTransform(rng)
        return st.forward, st.inverse, "positive"
    if kind == TransformKind.BOXCOX:
        return (lambda y: boxcox(y, BOXCOX_LAMBDA)), (lambda z: inv_boxcox(z, BOXCOX_LAMBDA)), "real"
    return (lambda y: np.asarray(y, dtype=float)), (lambda z: np.asarray(z, dtype=float)), "real"


def _latent(X, design: SimDesign, rng):
    p = X.shape[1]
    theta = np.zeros(p)
    # p/2 unit coefficients; a single covariate carries the signal
    theta[: max(1, p // 2)] = 1.0
    eps = design.error_sd * rng.standard_normal(X.shape[0])
    mu = X @ theta
    z = mu * (1.0 + eps) if design.heteroskedastic else mu + eps
    return z, theta


def gen_response(X, design: SimDesign, rng, moments=None, transform=None):
    """Responses for covariates ``X``.

    Returns ``(y, z, theta_true)`` with ``z`` the standardized latent data.
    ``moments=(mean, sd)`` standardizes with given moments (sample moments
    of this ``z`` otherwise); ``transform`` reuses a ``(forward, inverse)``
    pair so that train and test share the same step function.
    """
    X = np.asarray(X, dtype=float)
    z, theta = _latent(X, design, rng)
    if moments is None:
        moments = (float(z.mean()), float(z.std(ddof=1)) if z.size > 1 else 1.0)
    z = (z - moments[0]) / moments[1]
    if transform is None:
        _, inv, _ = _transform_pair(design, rng)
    else:
        inv = transform[1]
    return inv(z), z, theta


def simulate(design: SimDesign, rng=None) -> SimData:
    """Training set and a test set standardized with the training moments."""
    rng = rng if rng is not None else np.random.default_rng(design.seed)
    fwd, inv, domain = _transform_pair(design, rng)
    X = gen_covariates(design.n + design.n_test, design.p, rng)
    n = design.n
    z, theta = _latent(X, design, rng)
    m, s = float(z[:n].mean()), float(z[:n].std(ddof=1))
    z = (z - m) / s
    y = inv(z)
    return SimData(Dataset(X[:n], y[:n], domain=domain), X[n:], y[n:], z[:n], z[n:], theta, fwd, inv)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def metric_crps(predictive_draws, y_test, estimator: str = "pairs") -> float:
    """Sample CRPS ``E|Y - y| - E|Y - Y'| / 2`` averaged over test points.

    ``pairs`` uses every pair of draws through the sorted-draw identity
    ``sum_{j<k} |d_k - d_j| = sum_k (2k - S - 1) d_(k)``, which costs
    ``O(S log S)``; ``adjacent`` uses the ``S - 1`` pairs of consecutive
    draws.
    """
    D = np.asarray(predictive_draws, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    y = np.broadcast_to(np.asarray(y_test, dtype=float), (D.shape[1],))
    S = D.shape[0]
    if S < 2:
        raise DomainError("at least two draws are needed")
    term1 = np.abs(D - y[None, :]).mean(axis=0)
    if estimator == "pairs":
        Ds = np.sort(D, axis=0)
        k = np.arange(1, S + 1)[:, None]
        term2 = 2.0 * ((2 * k - S - 1) * Ds).sum(axis=0) / (S * (S - 1))
    elif estimator == "adjacent":
        term2 = np.abs(np.diff(D, axis=0)).mean(axis=0)
    else:
        raise DomainError(f"unknown estimator {estimator!r}")
    return float(np.mean(term1 - 0.5 * term2))


def gaussian_crps(mu, sigma, y) -> float:
    """Closed-form CRPS of ``N(mu, sigma^2)`` at ``y``."""
    w = (np.asarray(y, dtype=float) - mu) / sigma
    return float(np.mean(sigma * (w * (2 * special.ndtr(w) - 1) + 2 * np.exp(-0.5 * w * w) / np.sqrt(2 * np.pi) - 1 / np.sqrt(np.pi))))


def hpd_interval(draws, level: float = 0.95):
    """Shortest interval holding ``ceil(level * S)`` of the sorted draws, per column."""
    D = np.sort(np.asarray(draws, dtype=float), axis=0)
    if D.ndim == 1:
        D = D[:, None]
    S = D.shape[0]
    k = min(S, max(1, int(math.ceil(level * S))))
    widths = D[k - 1 :] - D[: S - k + 1]
    j = np.argmin(widths, axis=0)
    cols = np.arange(D.shape[1])
    return D[j, cols], D[j + k - 1, cols]


def metric_selection(theta_draws, theta_true, level: float = 0.95):
    """TPR and TNR of selecting coefficients whose HPD interval excludes zero."""
    T = np.asarray(theta_draws, dtype=float)
    truth = np.asarray(theta_true, dtype=float)
    if T.shape[0] < 100:
        raise DomainError("at least 100 draws are needed")
    lo, hi = hpd_interval(T, level)
    selected = (lo > 0) | (hi < 0)
    signal = truth != 0
    tpr = float(selected[signal].mean()) if signal.any() else math.nan
    tnr = float((~selected[~signal]).mean()) if (~signal).any() else math.nan
    return tpr, tnr


def metric_interval(predictive_draws, y_test, level: float = 0.9):
    """Mean width and coverage of equal-tailed predictive intervals."""
    D = np.asarray(predictive_draws, dtype=float)
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(D, [alpha, 1.0 - alpha], axis=0)
    y = np.asarray(y_test, dtype=float)
    return float(np.mean(hi - lo)), float(np.mean((y >= lo) & (y <= hi)))


def metric_quantile_calibration(quantile_estimates, y_test) -> float:
    """Proportion of test responses below the estimated quantile."""
    return float(np.mean(np.asarray(y_test) < np.asarray(quantile_estimates)))


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


@dataclass
class BaselineDraws:
    theta_draws: Optional[np.ndarray]
    predictive_draws: np.ndarray
    lambda_draws: Optional[np.ndarray] = None
    quantile_estimates: Optional[np.ndarray] = None


def _with_intercept(X):
    return np.column_stack([np.ones(X.shape[0]), X])


def baseline_blm(dataset: Dataset, config: Optional[SblmConfig] = None, query_points=None, rng=None) -> BaselineDraws:
    """Conjugate g-prior linear model on the raw responses."""
    config = config or SblmConfig()
    rng = rng if rng is not None else np.random.default_rng()
    X1 = _with_intercept(dataset.X)
    Xq1 = X1 if query_points is None else _with_intercept(np.asarray(query_points, dtype=float))
    psi = config.psi or float(dataset.n)
    cache = _GPriorCache(X1)
    S = config.num_draws
    thetas = np.empty((S, X1.shape[1]))
    preds = np.empty((S, Xq1.shape[0]))
    for s in range(S):
        sigma, theta = sblm_draw_sigma_theta(X1, dataset.y, psi, config.a_sigma, config.b_sigma, rng, cache)
        thetas[s] = theta
        preds[s] = Xq1 @ theta + sigma * rng.standard_normal(Xq1.shape[0])
    return BaselineDraws(thetas, preds)


def slice_sample(logf, x0: float, lower: float, upper: float, rng, width: float = 0.5, max_steps: int = 50):
    """One univariate slice-sampling update (stepping out, then shrinkage).

    The bracket is clipped to ``(lower, upper)``; ``logf`` is never evaluated
    outside it.
    """
    logy = logf(x0) - rng.standard_exponential()
    left = x0 - width * rng.uniform()
    right = left + width
    left, right = max(left, lower), min(right, upper)
    j = int(max_steps * rng.uniform())
    k = max_steps - 1 - j
    while j > 0 and left > lower and logf(left) > logy:
        left = max(left - width, lower)
        j -= 1
    while k > 0 and right < upper and logf(right) > logy:
        right = min(right + width, upper)
        k -= 1
    while True:
        x1 = left + (right - left) * rng.uniform()
        if lower < x1 < upper and logf(x1) >= logy:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1


def boxcox_log_prior(lam: float) -> float:
    """``N(0.5, 0.5^2)`` truncated to ``(0, 2)``, up to a constant."""
    if not 0.0 < lam < 2.0:
        return -np.inf
    return -0.5 * ((lam - 0.5) / 0.5) ** 2


def baseline_blm_boxcox(
    dataset: Dataset,
    config: Optional[SblmConfig] = None,
    query_points=None,
    rng=None,
    burn_in: int = 500,
) -> BaselineDraws:
    """g-prior linear model on Box-Cox transformed responses with unknown ``lambda``.

    Each sweep updates ``lambda`` by slice sampling its density given the
    data with ``(sigma, theta)`` integrated out (transformed-data marginal
    likelihood times the Jacobian and the truncated normal prior), then
    draws ``(sigma, theta)`` from their conjugate conditional.
    """
    config = config or SblmConfig()
    rng = rng if rng is not None else np.random.default_rng()
    y = dataset.y
    if np.any(y == 0):
        raise DomainError("the Box-Cox Jacobian requires nonzero responses")
    X1 = _with_intercept(dataset.X)
    Xq1 = X1 if query_points is None else _with_intercept(np.asarray(query_points, dtype=float))
    n = dataset.n
    psi = config.psi or float(n)
    a, b = config.a_sigma, config.b_sigma
    cache = _GPriorCache(X1)
    log_abs_y = float(np.sum(np.log(np.abs(y))))
    shrink = psi / (1.0 + psi)

    def logpost(lam):
        lp = boxcox_log_prior(lam)
        if not np.isfinite(lp):
            return -np.inf
        z = boxcox(y, lam)
        _, q = cache.project(z)
        rate = b + 0.5 * (float(z @ z) - shrink * q)
        return lp - (a + 0.5 * n) * np.log(rate) + (lam - 1.0) * log_abs_y

    lam = 0.5
    S = config.num_draws
    thetas = np.empty((S, X1.shape[1]))
    preds = np.empty((S, Xq1.shape[0]))
    lams = np.empty(S)
    for it in range(burn_in + S):
        lam = slice_sample(logpost, lam, 0.0, 2.0, rng)
        k = it - burn_in
        if k < 0:
            continue
        sigma, theta = sblm_draw_sigma_theta(X1, boxcox(y, lam), psi, a, b, rng, cache)
        thetas[k] = theta
        lams[k] = lam
        preds[k] = inv_boxcox(Xq1 @ theta + sigma * rng.standard_normal(Xq1.shape[0]), lam)
    return BaselineDraws(thetas, preds, lams)


def baseline_bqr(dataset: Dataset, config: Optional[SbqrConfig] = None, query_points=None, rng=None) -> BaselineDraws:
    d = bqr_run(dataset, config, query_points, rng)
    return BaselineDraws(d.theta_draws, d.predictive_draws, quantile_estimates=d.quantile_estimates)


def baseline_gp(dataset: Dataset, config: Optional[SbgpConfig] = None, query_points=None, rng=None) -> BaselineDraws:
    """GP regression on the raw responses with the full kriging predictive."""
    config = config or SbgpConfig()
    rng = rng if rng is not None else np.random.default_rng()
    fit = gp_mle_fit(dataset.X, dataset.y, config.smoothness_grid, config.maxiter)
    Xq = dataset.X if query_points is None else query_points
    return BaselineDraws(None, gp_predictive_draws(fit, Xq, config.num_draws, rng))


def baseline_gp_boxcox(
    dataset: Dataset, config: Optional[SbgpConfig] = None, query_points=None, rng=None, burn_in: int = 500
) -> BaselineDraws:
    """GP regression on Box-Cox transformed responses with unknown ``lambda``.

    The Matern correlation is fixed at its MLE for ``lambda = 0.5``. Given
    the correlation, ``lambda`` is slice sampled with the mean constant and
    noise variance integrated out under flat and ``1/sigma^2`` priors; the
    mean, variance and predictive then follow by composition.
    """
    config = config or SbgpConfig()
    rng = rng if rng is not None else np.random.default_rng()
    y = dataset.y
    if np.any(y == 0):
        raise DomainError("the Box-Cox Jacobian requires nonzero responses")
    n = dataset.n
    fit0 = gp_mle_fit(dataset.X, boxcox(y, BOXCOX_LAMBDA), config.smoothness_grid, config.maxiter)
    L = fit0.chol
    one = np.ones(n)
    Ai1 = linalg.cho_solve((L, True), one)
    s11 = float(one @ Ai1)
    log_abs_y = float(np.sum(np.log(np.abs(y))))
    Xq = dataset.X if query_points is None else query_points
    var_f = fit0.predict_var(Xq)

    def moments(lam):
        z = boxcox(y, lam)
        Aiz = linalg.cho_solve((L, True), z)
        m = float(one @ Aiz) / s11
        rss = float(z @ Aiz) - m * m * s11
        return z, m, max(rss, 1e-300)

    def logpost(lam):
        lp = boxcox_log_prior(lam)
        if not np.isfinite(lp):
            return -np.inf
        _, _, rss = moments(lam)
        return lp - 0.5 * (n - 1) * np.log(rss) + (lam - 1.0) * log_abs_y

    lam = BOXCOX_LAMBDA
    S = config.num_draws
    preds = np.empty((S, np.shape(var_f)[0]))
    lams = np.empty(S)
    for it in range(burn_in + S):
        lam = slice_sample(logpost, lam, 0.0, 2.0, rng)
        k = it - burn_in
        if k < 0:
            continue
        z, m_hat, rss = moments(lam)
        s2 = rss / (2.0 * rng.gamma(0.5 * (n - 1)))
        m = m_hat + np.sqrt(s2 / s11) * rng.standard_normal()
        mean = fit0.predict_mean(Xq, z, m)
        zq = mean + np.sqrt(s2 * (1.0 + var_f)) * rng.standard_normal(mean.size)
        preds[k] = inv_boxcox(zq, lam)
        lams[k] = lam
    return BaselineDraws(None, preds, lams)


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------

METHODS = ("sblm", "sblm_prior", "blm", "blm_boxcox", "sbqr", "sbqr_plugin", "bqr", "sbgp", "gp", "gp_boxcox")


@dataclass
class StudyConfig:
    num_draws: int = 1000
    tau: float = 0.5
    level: float = 0.9
    selection_level: float = 0.95
    burn_in: int = 1000

    def __post_init__(self):
        if self.num_draws < 2:
            raise ConfigError("num_draws must be at least 2")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")


def fit_method(method: str, data: SimData, study: StudyConfig, seed: int):
    """Run ``method`` on the training data; returns predictive draws and extras."""
    rng = np.random.default_rng(seed)
    ds, Xq = data.train, data.X_test
    S = study.num_draws
    if method in ("sblm", "sblm_prior"):
        src = SblmApprox.PRIOR if method == "sblm_prior" else SblmApprox.LAPLACE
        d = sblm_run(ds, SblmConfig(num_draws=S, approx_source=src), Xq, seed=seed)
        return BaselineDraws(d.theta_draws, d.predictive_draws)
    if method == "blm":
        return baseline_blm(ds, SblmConfig(num_draws=S), Xq, rng)
    if method == "blm_boxcox":
        return baseline_blm_boxcox(ds, SblmConfig(num_draws=S), Xq, rng)
    if method in ("sbqr", "sbqr_plugin", "bqr"):
        cfg = SbqrConfig(tau=study.tau, num_draws=S, burn_in=study.burn_in,
                         approx_source="plugin_qr" if method == "sbqr_plugin" else "prior")
        if method == "bqr":
            return baseline_bqr(ds, cfg, Xq, rng)
        d = sbqr_run(ds, cfg, Xq, seed=seed)
        return BaselineDraws(d.theta_draws, d.predictive_draws, quantile_estimates=d.quantile_estimates)
    if method == "sbgp":
        d = sbgp_run(ds, Xq, SbgpConfig(num_draws=S), seed=seed)
        return BaselineDraws(None, d.predictive_draws)
    if method == "gp":
        return baseline_gp(ds, SbgpConfig(num_draws=S), Xq, rng)
    if method == "gp_boxcox":
        return baseline_gp_boxcox(ds, SbgpConfig(num_draws=S), Xq, rng)
    raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")


def evaluate(draws: BaselineDraws, data: SimData, study: StudyConfig) -> MetricReport:
    width, cover = metric_interval(draws.predictive_draws, data.y_test, study.level)
    rep = MetricReport(interval_width=width, coverage=cover, crps=metric_crps(draws.predictive_draws, data.y_test))
    if draws.theta_draws is not None and draws.theta_draws.shape[0] >= 100:
        rep.tpr, rep.tnr = metric_selection(draws.theta_draws[:, 1:], data.theta_true, study.selection_level)
    if draws.quantile_estimates is not None:
        rep.quantile_calibration = metric_quantile_calibration(draws.quantile_estimates, data.y_test)
    return rep


def replicate_seeds(master_seed: int, replicate: int):
    """Data and method seeds of a replicate: ``SeedSequence(master, spawn_key=(r, k))``."""
    data_rng = substream(master_seed, replicate, 0)
    method_seed = int(substream(master_seed, replicate, 1).integers(0, 2**63 - 1))
    return data_rng, method_seed


def run_replicate(design: SimDesign, method: str, study: StudyConfig, master_seed: int, replicate: int) -> MetricReport:
    data_rng, method_seed = replicate_seeds(master_seed, replicate)
    data = simulate(design, data_rng)
    return evaluate(fit_method(method, data, study, method_seed), data, study)


def run_study(
    design: SimDesign,
    methods: Sequence[str],
    replicates: int,
    study: Optional[StudyConfig] = None,
    master_seed: Optional[int] = None,
    workers: int = 1,
) -> List[dict]:
    """Metric rows for each replicate and method.

    Replicates are independent; with ``workers > 1`` they run in a process
    pool, and results do not depend on the worker count.
    """
    study = study or StudyConfig()
    master_seed = design.seed if master_seed is None else master_seed
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    jobs = [(r, m) for r in range(replicates) for m in methods]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            futures = [ex.submit(run_replicate, design, m, study, master_seed, r) for r, m in jobs]
            reports = [f.result() for f in futures]
    else:
        reports = [run_replicate(design, m, study, master_seed, r) for r, m in jobs]
    name = "hetero" if design.heteroskedastic else design.transform_kind.value
    return [
        {"design": name, "n": design.n, "p": design.p, "method": m, "replicate": r, **dataclasses.asdict(rep)}
        for (r, m), rep in zip(jobs, reports)
    ]


REPORT_FIELDS = ["design", "n", "p", "method", "replicate"] + [f.name for f in dataclasses.fields(MetricReport)]


def reports_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def summarize(rows: Sequence[dict]) -> Dict[str, float]:
    """Mean of each metric keyed by ``design/method/metric`` (NaNs skipped)."""
    groups: Dict[tuple, List[dict]] = {}
    for row in rows:
        groups.setdefault((row["design"], row["method"]), []).append(row)
    out = {}
    for (design, method), rs in sorted(groups.items()):
        for f in dataclasses.fields(MetricReport):
            vals = np.array([r[f.name] for r in rs], dtype=float)
            vals = vals[~np.isnan(vals)]
            if vals.size:
                out[f"{design}/{method}/{f.name}"] = float(vals.mean())
    return out


def summary_json(rows: Sequence[dict]) -> str:
    return json.dumps(summarize(rows), indent=2, sort_keys=True)
