"""Probability kernels shared by the model families.

Normal, beta and gamma special functions are delegated to ``scipy.special``;
the generalized inverse Gaussian sampler and the asymmetric Laplace pieces
are implemented here.

GIG parameterization used throughout the package::

    p(x | lam, chi, psi)  proportional to  x**(lam - 1) * exp(-(chi / x + psi * x) / 2),  x > 0
"""

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError
from .kernels import sample_gig_vec


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite input")


def normal_cdf(t, mean=0.0, sd=1.0):
    """P(N(mean, sd^2) <= t), vectorised."""
    _check_finite(t, mean, sd)
    if np.any(np.asarray(sd) <= 0):
        raise DomainError("sd must be positive")
    out = special.ndtr((np.asarray(t, dtype=float) - mean) / sd)
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(p, mean=0.0, sd=1.0):
    p_arr = np.asarray(p, dtype=float)
    _check_finite(p_arr, mean, sd)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise DomainError("p must lie strictly inside (0, 1)")
    if np.any(np.asarray(sd) <= 0):
        raise DomainError("sd must be positive")
    out = mean + sd * special.ndtri(p_arr)
    return float(out) if np.ndim(out) == 0 else out


def normal_logpdf(t, mean=0.0, var=1.0):
    return -0.5 * (np.log(2.0 * np.pi * var) + (np.asarray(t) - mean) ** 2 / var)


def sample_dirichlet_flat(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the (n-1)-simplex, via normalised exponentials."""
    if n < 1:
        raise DomainError("Dirichlet dimension must be at least 1")
    e = rng.standard_exponential(n)
    return e / e.sum()


def ald_expansion_constants(tau: float) -> tuple[float, float]:
    """Location and scale constants of the exponential-normal mixture.

    An asymmetric Laplace error with check-loss density
    ``tau (1 - tau) exp(-rho_tau(e))`` equals ``a * xi + b * sqrt(xi) * eta``
    for ``xi ~ Exp(1)`` and ``eta ~ N(0, 1)`` independent.
    """
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie strictly inside (0, 1)")
    a = (1.0 - 2.0 * tau) / (tau * (1.0 - tau))
    b = math.sqrt(2.0 / (tau * (1.0 - tau)))
    return a, b


def sample_gig(lam, chi, psi, rng: np.random.Generator, size=None):
    """Draw from GIG(lam, chi, psi); see the module docstring for the density.

    Scalars broadcast against each other; ``size`` repeats a scalar
    parameter set.
    """
    lam_a, chi_a, psi_a = np.broadcast_arrays(
        np.asarray(lam, dtype=float), np.asarray(chi, dtype=float), np.asarray(psi, dtype=float)
    )
    if np.any(chi_a <= 0) or np.any(psi_a <= 0):
        raise DomainError("GIG requires chi > 0 and psi > 0")
    _check_finite(lam_a, chi_a, psi_a)
    shape = lam_a.shape
    if size is not None:
        if lam_a.ndim:
            raise DomainError("size is only supported for scalar parameters")
        shape = (size,) if np.isscalar(size) else tuple(size)
        lam_a, chi_a, psi_a = (np.full(shape, float(v)) for v in (lam_a, chi_a, psi_a))
    out = sample_gig_vec(
        np.ascontiguousarray(lam_a.ravel()),
        np.ascontiguousarray(chi_a.ravel()),
        np.ascontiguousarray(psi_a.ravel()),
        rng,
    )
    if not shape:
        return float(out[0])
    return out.reshape(shape)


def gig_log_normalizer(lam, chi, psi):
    """log of the integral of x^(lam-1) exp(-(chi/x + psi x)/2) over x > 0."""
    omega = math.sqrt(chi * psi)
    return math.log(2.0) + math.log(special.kve(lam, omega)) - omega + 0.5 * lam * math.log(chi / psi)


def gig_mean(lam, chi, psi):
    omega = math.sqrt(chi * psi)
    return math.sqrt(chi / psi) * special.kve(lam + 1, omega) / special.kve(lam, omega)


def beta_quantile(p, a, b):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)) or a <= 0 or b <= 0:
        raise DomainError("beta_quantile needs p in [0, 1] and positive shapes")
    out = special.betaincinv(a, b, p_arr)
    out = np.where(p_arr == 0, 0.0, np.where(p_arr == 1, 1.0, out))
    return float(out) if np.ndim(out) == 0 else out


def truncated_normal_sample(mean, sd, lower, upper, rng: np.random.Generator, size=None):
    """Inverse-cdf draw from N(mean, sd^2) restricted to (lower, upper)."""
    lo = special.ndtr((lower - mean) / sd)
    hi = special.ndtr((upper - mean) / sd)
    u = rng.uniform(lo, hi, size=size)
    return mean + sd * special.ndtri(u)


class Family(enum.Enum):
    NORMAL = "normal"
    EXPONENTIAL = "exponential"
    GAMMA = "gamma"
    BETA = "beta"
    ASYMMETRIC_LAPLACE = "asymmetric_laplace"
    GIG = "gig"
    TRUNCATED_NORMAL = "truncated_normal"


_N_PARAMS = {
    Family.NORMAL: 2,  # mean, sd
    Family.EXPONENTIAL: 1,  # rate
    Family.GAMMA: 2,  # shape, rate
    Family.BETA: 2,  # a, b
    Family.ASYMMETRIC_LAPLACE: 1,  # tau (unit scale, zero location)
    Family.GIG: 3,  # lam, chi, psi
    Family.TRUNCATED_NORMAL: 4,  # mean, sd, lower, upper
}


@dataclass(frozen=True)
class DistKernel:
    """A parameterised distribution exposing pdf, cdf, quantile and sampler."""

    family: Family
    params: tuple

    def __post_init__(self):
        if len(self.params) != _N_PARAMS[self.family]:
            raise DomainError(f"{self.family.value} takes {_N_PARAMS[self.family]} parameters")
        p = self.params
        positive = {
            Family.NORMAL: p[1:],
            Family.EXPONENTIAL: p,
            Family.GAMMA: p,
            Family.BETA: p,
            Family.GIG: p[1:],
            Family.TRUNCATED_NORMAL: p[1:2],
        }.get(self.family, ())
        if any(v <= 0 for v in positive):
            raise DomainError(f"invalid parameters for {self.family.value}: {p}")
        if self.family is Family.ASYMMETRIC_LAPLACE and not 0 < p[0] < 1:
            raise DomainError("tau must lie in (0, 1)")
        if self.family is Family.TRUNCATED_NORMAL and not p[2] < p[3]:
            raise DomainError("truncation bounds must be ordered")

    @property
    def support(self) -> tuple[float, float]:
        f = self.family
        if f in (Family.NORMAL, Family.ASYMMETRIC_LAPLACE):
            return -np.inf, np.inf
        if f is Family.BETA:
            return 0.0, 1.0
        if f is Family.TRUNCATED_NORMAL:
            return self.params[2], self.params[3]
        return 0.0, np.inf

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        f, p = self.family, self.params
        lo, hi = self.support
        inside = (t > lo) & (t < hi) if f is not Family.NORMAL else np.ones(t.shape, bool)
        with np.errstate(all="ignore"):
            if f is Family.NORMAL:
                out = np.exp(normal_logpdf(t, p[0], p[1] ** 2))
            elif f is Family.EXPONENTIAL:
                out = p[0] * np.exp(-p[0] * t)
            elif f is Family.GAMMA:
                out = np.exp(p[0] * np.log(p[1]) + (p[0] - 1) * np.log(t) - p[1] * t - special.gammaln(p[0]))
            elif f is Family.BETA:
                out = np.exp((p[0] - 1) * np.log(t) + (p[1] - 1) * np.log1p(-t) - special.betaln(p[0], p[1]))
            elif f is Family.ASYMMETRIC_LAPLACE:
                tau = p[0]
                out = tau * (1 - tau) * np.exp(-t * (tau - (t < 0)))
            elif f is Family.GIG:
                lam, chi, psi = p
                out = np.exp((lam - 1) * np.log(t) - 0.5 * (chi / t + psi * t) - gig_log_normalizer(lam, chi, psi))
            else:
                m, s, a, b = p
                z = special.ndtr((b - m) / s) - special.ndtr((a - m) / s)
                out = np.exp(normal_logpdf(t, m, s * s)) / z
        return np.where(inside, out, 0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        f, p = self.family, self.params
        with np.errstate(all="ignore"):
            if f is Family.NORMAL:
                out = special.ndtr((t - p[0]) / p[1])
            elif f is Family.EXPONENTIAL:
                out = -np.expm1(-p[0] * np.maximum(t, 0.0))
            elif f is Family.GAMMA:
                out = special.gammainc(p[0], p[1] * np.maximum(t, 0.0))
            elif f is Family.BETA:
                out = special.betainc(p[0], p[1], np.clip(t, 0.0, 1.0))
            elif f is Family.ASYMMETRIC_LAPLACE:
                tau = p[0]
                out = np.where(t < 0, tau * np.exp((1 - tau) * np.minimum(t, 0.0)), 1 - (1 - tau) * np.exp(-tau * np.maximum(t, 0.0)))
            elif f is Family.GIG:
                out = np.vectorize(self._gig_cdf_scalar)(t)
            else:
                m, s, a, b = p
                lo, hi = special.ndtr((a - m) / s), special.ndtr((b - m) / s)
                out = np.clip((special.ndtr((np.clip(t, a, b) - m) / s) - lo) / (hi - lo), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def _gig_cdf_scalar(self, t):
        if t <= 0:
            return 0.0
        lam, chi, psi = self.params
        lognorm = gig_log_normalizer(lam, chi, psi)

        def dens(x):
            return math.exp((lam - 1) * math.log(x) - 0.5 * (chi / x + psi * x) - lognorm)

        mode = _gig_mode_py(lam, chi, psi)
        if t <= mode:
            val, _ = integrate.quad(dens, 0.0, t, limit=200, epsabs=1e-14, epsrel=1e-12)
            return min(val, 1.0)
        val, _ = integrate.quad(dens, t, np.inf, limit=200, epsabs=1e-14, epsrel=1e-12)
        return max(1.0 - val, 0.0)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise DomainError("quantile level must lie in [0, 1]")
        f, p = self.family, self.params
        with np.errstate(all="ignore"):
            if f is Family.NORMAL:
                out = p[0] + p[1] * special.ndtri(q)
            elif f is Family.EXPONENTIAL:
                out = -np.log1p(-q) / p[0]
            elif f is Family.GAMMA:
                out = special.gammaincinv(p[0], q) / p[1]
            elif f is Family.BETA:
                out = beta_quantile(q, p[0], p[1])
            elif f is Family.ASYMMETRIC_LAPLACE:
                tau = p[0]
                out = np.where(q < tau, np.log(q / tau) / (1 - tau), -np.log((1 - q) / (1 - tau)) / tau)
            elif f is Family.GIG:
                out = np.vectorize(self._gig_quantile_scalar)(q)
            else:
                m, s, a, b = p
                lo, hi = special.ndtr((a - m) / s), special.ndtr((b - m) / s)
                out = m + s * special.ndtri(lo + q * (hi - lo))
        return float(out) if np.ndim(out) == 0 else out

    def _gig_quantile_scalar(self, q):
        if q <= 0:
            return 0.0
        if q >= 1:
            return np.inf
        hi = max(_gig_mode_py(*self.params), 1e-12)
        while self._gig_cdf_scalar(hi) < q:
            hi *= 2.0
        lo = hi
        while lo > 1e-300 and self._gig_cdf_scalar(lo) > q:
            lo *= 0.5
        return optimize.brentq(lambda x: self._gig_cdf_scalar(x) - q, lo, hi, xtol=1e-14, rtol=1e-13)

    def sample(self, rng: np.random.Generator, size=None):
        f, p = self.family, self.params
        if f is Family.NORMAL:
            return rng.normal(p[0], p[1], size)
        if f is Family.EXPONENTIAL:
            return rng.exponential(1.0 / p[0], size)
        if f is Family.GAMMA:
            return rng.gamma(p[0], 1.0 / p[1], size)
        if f is Family.BETA:
            return rng.beta(p[0], p[1], size)
        if f is Family.ASYMMETRIC_LAPLACE:
            a, b = ald_expansion_constants(p[0])
            xi = rng.standard_exponential(size)
            return a * xi + b * np.sqrt(xi) * rng.standard_normal(size)
        if f is Family.GIG:
            return sample_gig(p[0], p[1], p[2], rng, size=size)
        return truncated_normal_sample(p[0], p[1], p[2], p[3], rng, size)

    def mean(self) -> float:
        f, p = self.family, self.params
        if f is Family.NORMAL:
            return p[0]
        if f is Family.EXPONENTIAL:
            return 1.0 / p[0]
        if f is Family.GAMMA:
            return p[0] / p[1]
        if f is Family.BETA:
            return p[0] / (p[0] + p[1])
        if f is Family.ASYMMETRIC_LAPLACE:
            return ald_expansion_constants(p[0])[0]
        if f is Family.GIG:
            return gig_mean(*p)
        m, s, a, b = p
        al, be = (a - m) / s, (b - m) / s
        z = special.ndtr(be) - special.ndtr(al)
        return m + s * (np.exp(normal_logpdf(al)) - np.exp(normal_logpdf(be))) / z


def _gig_mode_py(lam, chi, psi):
    # mode of x^(lam-1) exp(-(chi/x + psi x)/2)
    return ((lam - 1) + math.sqrt((lam - 1) ** 2 + chi * psi)) / psi


def ks_statistic(sample: Sequence[float], cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance against a vectorised cdf."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    F = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - F
    lower = F - np.arange(n) / n
    return float(max(upper.max(), lower.max()))
