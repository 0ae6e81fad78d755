"""Hot numeric kernels.

Every kernel exists twice: a numba-compiled loop (``*_nb``) and a
vectorised numpy version (``*_np``). The public name is bound to one of the
two at import time, see :mod:`semibayes._accel`. Both paths agree to
floating-point tolerance for the deterministic kernels and in distribution
for the GIG sampler (they consume the random stream differently).

Normal mixtures are passed flat: ``means``, ``sds`` and ``weights`` are 1-d
arrays of the same length, weights summing to one.
"""

import math

import numpy as np
from scipy import special

from ._accel import njit, select

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
LOG2PI = math.log(2.0 * math.pi)

_MAX_ITER = 200


# ---------------------------------------------------------------------------
# normal mixture cdf / pdf
# ---------------------------------------------------------------------------


@njit
def _mix_eval_scalar(x, means, sds, weights):
    F = 0.0
    f = 0.0
    for j in range(means.shape[0]):
        w = weights[j]
        if w == 0.0:
            continue
        u = (x - means[j]) / sds[j]
        F += w * 0.5 * math.erfc(-u / SQRT2)
        f += w * math.exp(-0.5 * u * u) / (sds[j] * SQRT2PI)
    return F, f


@njit
def mixture_cdf_pdf_nb(x, means, sds, weights):
    F = np.empty(x.shape[0])
    f = np.empty(x.shape[0])
    for k in range(x.shape[0]):
        F[k], f[k] = _mix_eval_scalar(x[k], means, sds, weights)
    return F, f


def mixture_cdf_pdf_np(x, means, sds, weights):
    x = np.asarray(x, dtype=float)
    F = np.empty(x.shape[0])
    f = np.empty(x.shape[0])
    step = max(1, 4_000_000 // max(1, means.shape[0]))
    for start in range(0, x.shape[0], step):
        u = (x[start : start + step, None] - means[None, :]) / sds[None, :]
        F[start : start + step] = special.ndtr(u) @ weights
        f[start : start + step] = (np.exp(-0.5 * u * u) / (sds * SQRT2PI)) @ weights
    return F, f


mixture_cdf_pdf = select(mixture_cdf_pdf_nb, mixture_cdf_pdf_np)


def _initial_bracket(means, sds, weights):
    center = float(weights @ means)
    spread = math.sqrt(float(weights @ (sds**2 + (means - center) ** 2)))
    return center, max(spread, 1e-300)


# ---------------------------------------------------------------------------
# normal mixture inversion
# ---------------------------------------------------------------------------


@njit
def _invert_mixture_nb(p, means, sds, weights, lo, hi, tol):
    m = p.shape[0]
    out = np.empty(m)
    order = np.argsort(p)
    a = lo
    for r in range(m):
        idx = order[r]
        target = p[idx]
        lo_b = a
        hi_b = hi
        x = a
        prev_gap = np.inf
        for it in range(_MAX_ITER):
            Fx, fx = _mix_eval_scalar(x, means, sds, weights)
            diff = Fx - target
            # relative to the nearer tail so that extreme probabilities keep full accuracy
            if abs(diff) <= tol * min(target, 1.0 - target):
                break
            if diff < 0.0:
                lo_b = x
            else:
                hi_b = x
            if hi_b - lo_b <= 4e-16 * (1.0 + abs(x)):
                break
            xn = x - diff / fx if fx > 0.0 else np.nan
            # fall back to bisection when Newton leaves the bracket or stalls
            if not (lo_b < xn < hi_b) or abs(diff) > 0.5 * prev_gap:
                xn = 0.5 * (lo_b + hi_b)
            prev_gap = abs(diff)
            x = xn
        out[idx] = x
        a = x
    return out


def _invert_mixture_np(p, means, sds, weights, lo, hi, tol):
    p = np.asarray(p, dtype=float)
    lo_b = np.full(p.shape, lo)
    hi_b = np.full(p.shape, hi)
    x = 0.5 * (lo_b + hi_b)
    active = np.ones(p.shape, dtype=bool)
    for it in range(_MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        F, f = mixture_cdf_pdf_np(x[idx], means, sds, weights)
        diff = F - p[idx]
        done = np.abs(diff) <= tol * np.minimum(p[idx], 1.0 - p[idx])
        lo_b[idx] = np.where(diff < 0.0, x[idx], lo_b[idx])
        hi_b[idx] = np.where(diff > 0.0, x[idx], hi_b[idx])
        done |= (hi_b[idx] - lo_b[idx]) <= 4e-16 * (1.0 + np.abs(x[idx]))
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x[idx] - diff / f
        mid = 0.5 * (lo_b[idx] + hi_b[idx])
        bad = ~((xn > lo_b[idx]) & (xn < hi_b[idx]))
        if it % 4 == 3:
            bad[:] = True
        xn = np.where(bad, mid, xn)
        x[idx] = np.where(done, x[idx], xn)
        active[idx[done]] = False
    return x


def invert_mixture_flat(p, means, sds, weights, tol=1e-13):
    """Solve ``F(t) = p`` for a flat normal mixture, vectorised over ``p``."""
    p = np.ascontiguousarray(p, dtype=float)
    means = np.ascontiguousarray(means, dtype=float)
    sds = np.ascontiguousarray(sds, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    if p.size == 0:
        return p.copy()
    center, spread = _initial_bracket(means, sds, weights)
    lo = center - 8.0 * spread
    hi = center + 8.0 * spread
    pmin, pmax = float(p.min()), float(p.max())
    for _ in range(2000):
        if mixture_cdf_pdf(np.array([lo]), means, sds, weights)[0][0] <= pmin:
            break
        lo = center - 2.0 * (center - lo)
    for _ in range(2000):
        if mixture_cdf_pdf(np.array([hi]), means, sds, weights)[0][0] >= pmax:
            break
        hi = center + 2.0 * (hi - center)
    impl = select(_invert_mixture_nb, _invert_mixture_np)
    return impl(p, means, sds, weights, lo, hi, tol)


# ---------------------------------------------------------------------------
# per-component cdf tables (for mixtures of many sub-normals)
# ---------------------------------------------------------------------------


@njit
def component_table_nb(grid, means, sds):
    n, K = means.shape
    G = grid.shape[0]
    C = np.zeros((n, G))
    D = np.zeros((n, G))
    for i in range(n):
        for k in range(K):
            mu = means[i, k]
            s = sds[i, k]
            for g in range(G):
                u = (grid[g] - mu) / s
                C[i, g] += 0.5 * math.erfc(-u / SQRT2)
                D[i, g] += math.exp(-0.5 * u * u) / (s * SQRT2PI)
        for g in range(G):
            C[i, g] /= K
            D[i, g] /= K
    return C, D


def component_table_np(grid, means, sds):
    n, K = means.shape
    C = np.empty((n, grid.shape[0]))
    D = np.empty((n, grid.shape[0]))
    for i in range(n):
        u = (grid[None, :] - means[i, :, None]) / sds[i, :, None]
        C[i] = special.ndtr(u).mean(axis=0)
        D[i] = (np.exp(-0.5 * u * u) / (sds[i, :, None] * SQRT2PI)).mean(axis=0)
    return C, D


component_table = select(component_table_nb, component_table_np)


# ---------------------------------------------------------------------------
# monotone cubic Hermite evaluation and inversion
# ---------------------------------------------------------------------------


@njit
def _segment(knots, x):
    # index k with knots[k] <= x < knots[k+1], clipped to [0, m-2]
    m = knots.shape[0]
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if knots[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


@njit
def _hermite_at(t, g, d, k, s):
    h = t[k + 1] - t[k]
    s2 = s * s
    s3 = s2 * s
    return (
        (2.0 * s3 - 3.0 * s2 + 1.0) * g[k]
        + (s3 - 2.0 * s2 + s) * h * d[k]
        + (-2.0 * s3 + 3.0 * s2) * g[k + 1]
        + (s3 - s2) * h * d[k + 1]
    )


@njit
def _hermite_ds(t, g, d, k, s):
    h = t[k + 1] - t[k]
    s2 = s * s
    return (
        (6.0 * s2 - 6.0 * s) * (g[k] - g[k + 1])
        + (3.0 * s2 - 4.0 * s + 1.0) * h * d[k]
        + (3.0 * s2 - 2.0 * s) * h * d[k + 1]
    )


@njit
def hermite_eval_nb(t, g, d, x, linear_tails):
    m = t.shape[0]
    out = np.empty(x.shape[0])
    for j in range(x.shape[0]):
        xj = x[j]
        if xj <= t[0]:
            out[j] = g[0] + d[0] * (xj - t[0]) if linear_tails else g[0]
        elif xj >= t[m - 1]:
            out[j] = g[m - 1] + d[m - 1] * (xj - t[m - 1]) if linear_tails else g[m - 1]
        else:
            k = _segment(t, xj)
            out[j] = _hermite_at(t, g, d, k, (xj - t[k]) / (t[k + 1] - t[k]))
    return out


def hermite_eval_np(t, g, d, x, linear_tails):
    x = np.asarray(x, dtype=float)
    k = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 2)
    h = t[k + 1] - t[k]
    s = np.clip((x - t[k]) / h, 0.0, 1.0)
    s2 = s * s
    s3 = s2 * s
    out = (
        (2 * s3 - 3 * s2 + 1) * g[k]
        + (s3 - 2 * s2 + s) * h * d[k]
        + (-2 * s3 + 3 * s2) * g[k + 1]
        + (s3 - s2) * h * d[k + 1]
    )
    left = x <= t[0]
    right = x >= t[-1]
    if linear_tails:
        out[left] = g[0] + d[0] * (x[left] - t[0])
        out[right] = g[-1] + d[-1] * (x[right] - t[-1])
    else:
        out[left] = g[0]
        out[right] = g[-1]
    return out


hermite_eval = select(hermite_eval_nb, hermite_eval_np)


@njit
def _solve_segment(t, g, d, k, z):
    lo = 0.0
    hi = 1.0
    span = g[k + 1] - g[k]
    s = (z - g[k]) / span if span > 0.0 else 0.0
    if not (0.0 <= s <= 1.0):
        s = 0.5
    scale = 1e-14 * (1.0 + abs(z))
    for it in range(_MAX_ITER):
        r = _hermite_at(t, g, d, k, s) - z
        if abs(r) <= scale:
            break
        if r < 0.0:
            lo = s
        else:
            hi = s
        if hi - lo <= 1e-16:
            break
        ds = _hermite_ds(t, g, d, k, s)
        sn = s - r / ds if ds > 0.0 else -1.0
        if not (lo < sn < hi):
            sn = 0.5 * (lo + hi)
        s = sn
    return t[k] + s * (t[k + 1] - t[k])


@njit
def hermite_inverse_nb(t, g, d, z, linear_tails):
    m = t.shape[0]
    out = np.empty(z.shape[0])
    for j in range(z.shape[0]):
        zj = z[j]
        if zj <= g[0]:
            if linear_tails and d[0] > 0.0:
                out[j] = t[0] + (zj - g[0]) / d[0]
            else:
                out[j] = t[0]
        elif zj >= g[m - 1]:
            if linear_tails and d[m - 1] > 0.0:
                out[j] = t[m - 1] + (zj - g[m - 1]) / d[m - 1]
            else:
                out[j] = t[m - 1]
        else:
            k = _segment(g, zj)
            out[j] = _solve_segment(t, g, d, k, zj)
    return out


def hermite_inverse_np(t, g, d, z, linear_tails):
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape)
    left = z <= g[0]
    right = z >= g[-1]
    inner = ~(left | right)
    if linear_tails and d[0] > 0:
        out[left] = t[0] + (z[left] - g[0]) / d[0]
    else:
        out[left] = t[0]
    if linear_tails and d[-1] > 0:
        out[right] = t[-1] + (z[right] - g[-1]) / d[-1]
    else:
        out[right] = t[-1]
    zi = z[inner]
    k = np.clip(np.searchsorted(g, zi, side="right") - 1, 0, t.size - 2)
    h = t[k + 1] - t[k]
    g0, g1, d0, d1 = g[k], g[k + 1], d[k] * h, d[k + 1] * h
    lo = np.zeros(zi.shape)
    hi = np.ones(zi.shape)
    s = 0.5 * (lo + hi)
    for it in range(_MAX_ITER):
        s2 = s * s
        s3 = s2 * s
        val = (2 * s3 - 3 * s2 + 1) * g0 + (s3 - 2 * s2 + s) * d0 + (-2 * s3 + 3 * s2) * g1 + (s3 - s2) * d1
        r = val - zi
        lo = np.where(r < 0, s, lo)
        hi = np.where(r > 0, s, hi)
        if np.all((np.abs(r) <= 1e-14 * (1 + np.abs(zi))) | (hi - lo <= 1e-16)):
            break
        ds = (6 * s2 - 6 * s) * (g0 - g1) + (3 * s2 - 4 * s + 1) * d0 + (3 * s2 - 2 * s) * d1
        with np.errstate(divide="ignore", invalid="ignore"):
            sn = s - r / ds
        bad = ~((sn > lo) & (sn < hi)) | (it % 4 == 3)
        s = np.where(np.abs(r) <= 1e-14 * (1 + np.abs(zi)), s, np.where(bad, 0.5 * (lo + hi), sn))
    out[inner] = t[k] + s * h
    return out


hermite_inverse = select(hermite_inverse_nb, hermite_inverse_np)


# ---------------------------------------------------------------------------
# generalized inverse Gaussian sampling
#
# Density convention: f(x) proportional to x^(lam-1) exp(-(chi/x + psi*x)/2),
# x > 0.  Sampling works on the standardised form with omega = sqrt(chi*psi)
# and rescales by alpha = sqrt(chi/psi); negative lam samples the reciprocal
# of the |lam| variate.  The three regimes are the ratio-of-uniforms
# generators with and without mode shift and the piecewise hat of
# Hoermann & Leydold (2014) for small omega and lam < 1.
# ---------------------------------------------------------------------------


@njit
def _gig_mode(lam, omega):
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega * omega) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega * omega) + (1.0 - lam))


@njit
def _gig_rou_noshift(lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega * omega)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)
    while True:
        u = um * rng.random()
        v = rng.random()
        if v == 0.0 or u == 0.0:
            continue
        x = u / v
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@njit
def _gig_rou_shift(lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c
    fi = math.acos(-q / (2.0 * math.sqrt(-(p * p * p) / 27.0)))
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)
    while True:
        u = uminus + rng.random() * (uplus - uminus)
        v = rng.random()
        if v == 0.0:
            continue
        x = u / v + xm
        if x <= 0.0:
            continue
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@njit
def _gig_small_omega(lam, omega, rng):
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    A0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        A1 = 0.0
        k2 = x0 ** (lam - 1.0)
        A2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        if lam == 0.0:
            A1 = k1 * math.log(2.0 / (omega * omega))
        else:
            A1 = k1 / lam * ((2.0 / omega) ** lam - x0**lam)
        k2 = (2.0 / omega) ** (lam - 1.0)
        A2 = k2 * 2.0 * math.exp(-1.0) / omega
    Atot = A0 + A1 + A2
    while True:
        v = Atot * rng.random()
        if v <= A0:
            x = x0 * v / A0
            hx = k0
        elif v - A0 <= A1:
            v -= A0
            if lam == 0.0:
                x = omega * math.exp(math.exp(omega) * v)
                hx = k1 / x
            else:
                x = (x0**lam + lam / k1 * v) ** (1.0 / lam)
                hx = k1 * x ** (lam - 1.0)
        else:
            v -= A0 + A1
            a = x0 if x0 > 2.0 / omega else 2.0 / omega
            x = -2.0 / omega * math.log(math.exp(-omega / 2.0 * a) - omega / (2.0 * k2) * v)
            hx = k2 * math.exp(-omega / 2.0 * x)
        if x <= 0.0:
            continue
        u = rng.random() * hx
        if u > 0.0 and math.log(u) <= (lam - 1.0) * math.log(x) - omega / 2.0 * (x + 1.0 / x):
            return x


@njit
def gig_scalar(lam, chi, psi, rng):
    if chi == 0.0:
        # Gamma(lam, rate psi/2) limit, requires lam > 0
        return rng.standard_gamma(lam) / (0.5 * psi)
    if psi == 0.0:
        return (0.5 * chi) / rng.standard_gamma(-lam)
    a = abs(lam)
    omega = math.sqrt(chi * psi)
    alpha = math.sqrt(chi / psi)
    if a > 2.0 or omega > 3.0:
        x = _gig_rou_shift(a, omega, rng)
    elif a >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        x = _gig_rou_noshift(a, omega, rng)
    else:
        x = _gig_small_omega(a, omega, rng)
    return alpha / x if lam < 0.0 else alpha * x


@njit
def sample_gig_nb(lam, chi, psi, rng):
    n = chi.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = gig_scalar(lam[i], chi[i], psi[i], rng)
    return out


def _np_rou_noshift(lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode_np(lam, omega)
    nc = t * np.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + np.sqrt((lam + 1.0) ** 2 + omega**2)) / omega
    um = np.exp(0.5 * (lam + 1.0) * np.log(ym) - s * (ym + 1.0 / ym) - nc)
    out = np.empty(lam.shape)
    pending = np.arange(lam.size)
    while pending.size:
        u = um[pending] * rng.random(pending.size)
        v = rng.random(pending.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = u / v
            ok = (v > 0) & (u > 0)
            ok &= np.log(v) <= t[pending] * np.log(x) - s[pending] * (x + 1.0 / x) - nc[pending]
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def _np_rou_shift(lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode_np(lam, omega)
    nc = t * np.log(xm) - s * (xm + 1.0 / xm)
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + xm
    fi = np.arccos(-q / (2.0 * np.sqrt(-(p**3) / 27.0)))
    fak = 2.0 * np.sqrt(-p / 3.0)
    y1 = fak * np.cos(fi / 3.0) - a / 3.0
    y2 = fak * np.cos(fi / 3.0 + 4.0 / 3.0 * np.pi) - a / 3.0
    uplus = (y1 - xm) * np.exp(t * np.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * np.exp(t * np.log(y2) - s * (y2 + 1.0 / y2) - nc)
    out = np.empty(lam.shape)
    pending = np.arange(lam.size)
    while pending.size:
        u = uminus[pending] + rng.random(pending.size) * (uplus[pending] - uminus[pending])
        v = rng.random(pending.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = u / v + xm[pending]
            ok = (v > 0) & (x > 0)
            ok &= np.log(v) <= t[pending] * np.log(x) - s[pending] * (x + 1.0 / x) - nc[pending]
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def _np_small_omega(lam, omega, rng):
    out = np.empty(lam.shape)
    # the piecewise hat has data-dependent branches; loop over the few cases
    for j in range(lam.size):
        out[j] = _gig_small_omega_py(float(lam[j]), float(omega[j]), rng)
    return out


def _gig_mode_np(lam, omega):
    return np.where(
        lam >= 1.0,
        (np.sqrt((lam - 1.0) ** 2 + omega**2) + (lam - 1.0)) / omega,
        omega / (np.sqrt((1.0 - lam) ** 2 + omega**2) + (1.0 - lam)),
    )


_gig_small_omega_py = getattr(_gig_small_omega, "py_func", _gig_small_omega)


def sample_gig_np(lam, chi, psi, rng):
    lam = np.asarray(lam, dtype=float)
    chi = np.asarray(chi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    out = np.empty(chi.shape)
    gam = chi == 0.0
    igam = (psi == 0.0) & ~gam
    if gam.any():
        out[gam] = rng.standard_gamma(lam[gam]) / (0.5 * psi[gam])
    if igam.any():
        out[igam] = 0.5 * chi[igam] / rng.standard_gamma(-lam[igam])
    reg = ~(gam | igam)
    a = np.abs(lam[reg])
    omega = np.sqrt(chi[reg] * psi[reg])
    alpha = np.sqrt(chi[reg] / psi[reg])
    x = np.empty(a.shape)
    shift = (a > 2.0) | (omega > 3.0)
    noshift = ~shift & ((a >= 1.0 - 2.25 * omega**2) | (omega > 0.2))
    small = ~(shift | noshift)
    if shift.any():
        x[shift] = _np_rou_shift(a[shift], omega[shift], rng)
    if noshift.any():
        x[noshift] = _np_rou_noshift(a[noshift], omega[noshift], rng)
    if small.any():
        x[small] = _np_small_omega(a[small], omega[small], rng)
    out[reg] = np.where(lam[reg] < 0, alpha / x, alpha * x)
    return out


sample_gig_vec = select(sample_gig_nb, sample_gig_np)


# ---------------------------------------------------------------------------
# log of a product of Dirichlet-weighted unit-variance normal mixtures,
# averaged over parameter draws: the numerator of the importance weight
# ---------------------------------------------------------------------------


@njit
def log_mean_mixture_likelihood_nb(z, M, log_alpha):
    S, n = M.shape
    totals = np.empty(S)
    for s in range(S):
        tot = 0.0
        for i in range(n):
            mx = -np.inf
            for ip in range(n):
                r = z[i] - M[s, ip]
                v = log_alpha[ip] - 0.5 * r * r
                if v > mx:
                    mx = v
            if mx == -np.inf:
                tot = -np.inf
                break
            acc = 0.0
            for ip in range(n):
                r = z[i] - M[s, ip]
                acc += math.exp(log_alpha[ip] - 0.5 * r * r - mx)
            tot += mx + math.log(acc)
        totals[s] = tot - 0.5 * n * LOG2PI
    mx = totals.max()
    if mx == -np.inf:
        return -np.inf
    acc = 0.0
    for s in range(S):
        acc += math.exp(totals[s] - mx)
    return mx + math.log(acc) - math.log(S)


def log_mean_mixture_likelihood_np(z, M, log_alpha):
    S, n = M.shape
    totals = np.empty(S)
    chunk = max(1, 2_000_000 // max(1, n * n))
    for start in range(0, S, chunk):
        Mc = M[start : start + chunk]
        v = log_alpha[None, None, :] - 0.5 * (z[None, :, None] - Mc[:, None, :]) ** 2
        totals[start : start + chunk] = special.logsumexp(v, axis=2).sum(axis=1)
    totals -= 0.5 * n * LOG2PI
    return float(special.logsumexp(totals) - math.log(S))


log_mean_mixture_likelihood = select(log_mean_mixture_likelihood_nb, log_mean_mixture_likelihood_np)
