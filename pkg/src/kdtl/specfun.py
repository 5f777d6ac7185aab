"""Integer-order Bessel functions and the entire function behind the contrast formula.

Everything here is built from power series (small arguments) and Miller's
backward recurrence (larger arguments).  All public functions accept scalars
or numpy arrays and return a float for scalar input.

The visibility formula needs J_2 on both sides of the branch point
``xi_coh**2 == xi_abs**2``.  Rather than switching between J_2 and I_2 it uses

    h(u) = sum_k (-1)**k u**(k+1) / (4**(k+1) k! (k+2)!)

which is J_2(sqrt(u)) for u >= 0 and -I_2(sqrt(-u)) for u < 0, together with
the quotient ``g(u) = h(u) / u`` (g(0) = 1/8) that removes the removable
singularity of ``(a - b) / (a + b) * h(a**2 - b**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

__all__ = [
    "SeriesConfig",
    "bessel_j",
    "bessel_i",
    "bessel_j_series",
    "bessel_j_recurrence",
    "bessel_i_series",
    "bessel_i_recurrence",
    "h_entire",
    "h_over_u",
    "sinc_pi",
]

# |x| up to which the power series is used; beyond it cancellation in the
# alternating J series starts to cost digits.
SERIES_X_MAX = 8.0
_RESCALE = 1e250


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation controls for the power series."""

    max_terms: int = 60
    abs_tol: float = 1e-15

    def __post_init__(self):
        if self.max_terms < 8:
            raise DomainError(f"max_terms must be >= 8, got {self.max_terms}")
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")


DEFAULT_SERIES = SeriesConfig()


def _scalar_or_array(values, scalar_input):
    if scalar_input:
        return float(values.reshape(-1)[0])
    return values


def _check_order(n):
    if int(n) != n or n < 0:
        raise DomainError(f"order must be a non-negative integer, got {n}")
    return int(n)


def _series(n, x, sign, config):
    # sum_k sign**k (x/2)**(2k+n) / (k! (k+n)!)
    half = 0.5 * x
    term = half**n / math.factorial(n)
    total = term.copy()
    q = sign * half * half
    for k in range(1, config.max_terms):
        term = term * q / (k * (k + n))
        total = total + term
        if np.all(np.abs(term) <= config.abs_tol * np.maximum(1.0, np.abs(total))):
            break
    return total


def _miller_start(n, xmax):
    m = max(n, xmax)
    start = int(m + 30 + math.sqrt(60.0 * max(m, 1.0)))
    return start + (start % 2)


def _miller_j(n, x):
    """J_n(x) for x > 0 by backward recurrence normalised with J0 + 2 sum J_2k = 1."""
    start = _miller_start(n, float(np.max(x)))
    j_next = np.zeros_like(x)
    j = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    result = np.zeros_like(x)
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / x) * j - j_next
        j_next, j = j, j_prev
        order = k - 1
        if order == n:
            result = j.copy()
        if order > 0 and order % 2 == 0:
            norm = norm + 2.0 * j
        big = np.abs(j) > _RESCALE
        if np.any(big):
            scale = np.where(big, 1.0 / _RESCALE, 1.0)
            j, j_next, norm, result = j * scale, j_next * scale, norm * scale, result * scale
    norm = norm + j
    return result / norm


def _miller_i(n, x, scaled=False):
    """I_n(x) for x > 0 by backward recurrence normalised with I0 + 2 sum I_k = exp(x).

    ``scaled=True`` returns exp(-x) I_n(x).
    """
    start = _miller_start(n, float(np.max(x)))
    i_next = np.zeros_like(x)
    i = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    result = np.zeros_like(x)
    for k in range(start, 0, -1):
        i_prev = (2.0 * k / x) * i + i_next
        i_next, i = i, i_prev
        order = k - 1
        if order == n:
            result = i.copy()
        if order > 0:
            norm = norm + 2.0 * i
        big = np.abs(i) > _RESCALE
        if np.any(big):
            scale = np.where(big, 1.0 / _RESCALE, 1.0)
            i, i_next, norm, result = i * scale, i_next * scale, norm * scale, result * scale
    norm = norm + i
    if scaled:
        return result / norm
    return result / norm * np.exp(x)


def _by_magnitude(miller, n, x, **kwargs):
    # The recurrence length is set by the largest argument, so evaluate
    # octaves of |x| separately instead of running every element that long.
    out = np.empty_like(x)
    octave = np.floor(np.log2(np.maximum(x, 1.0))).astype(int)
    for k in np.unique(octave):
        sel = octave == k
        out[sel] = miller(n, x[sel], **kwargs)
    return out


def bessel_j_series(n, x, config=DEFAULT_SERIES):
    """J_n(x) from the power series alone (reference path, any |x| <= ~12)."""
    n = _check_order(n)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    return _scalar_or_array(_series(n, xa, -1.0, config), scalar)


def bessel_j_recurrence(n, x):
    """J_n(x) from backward recurrence alone."""
    n = _check_order(n)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    ax = np.abs(xa)
    out = np.zeros_like(ax)
    nz = ax > 0
    if np.any(nz):
        out[nz] = _by_magnitude(_miller_j, n, ax[nz])
    if n == 0:
        out[~nz] = 1.0
    out = np.where(xa < 0, (-1.0) ** n * out, out)
    return _scalar_or_array(out, scalar)


def bessel_i_series(n, x, config=DEFAULT_SERIES):
    """I_n(x) from the power series alone."""
    n = _check_order(n)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    return _scalar_or_array(_series(n, xa, 1.0, config), scalar)


def bessel_i_recurrence(n, x):
    """I_n(x), x >= 0, from backward recurrence alone."""
    n = _check_order(n)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(xa)
    nz = xa > 0
    if np.any(nz):
        out[nz] = _by_magnitude(_miller_i, n, xa[nz])
    if n == 0:
        out[~nz] = 1.0
    return _scalar_or_array(out, scalar)


def bessel_j(n, x, config=DEFAULT_SERIES):
    """Bessel function of the first kind J_n(x) for integer n >= 0.

    Accurate to about 1e-12 absolute for |x| <= 50; arguments up to 1e4 are
    accepted.
    """
    n = _check_order(n)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(xa)) or np.any(np.abs(xa) > 1e4):
        raise DomainError("bessel_j requires finite |x| <= 1e4")
    out = np.empty_like(xa)
    small = np.abs(xa) <= SERIES_X_MAX
    if np.any(small):
        out[small] = _series(n, xa[small], -1.0, config)
    if np.any(~small):
        out[~small] = bessel_j_recurrence(n, xa[~small])
    return _scalar_or_array(out, scalar)


def bessel_i(n, x, config=DEFAULT_SERIES):
    """Modified Bessel function of the first kind I_n(x) for x >= 0."""
    n = _check_order(n)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa < 0) or not np.all(np.isfinite(xa)):
        raise DomainError("bessel_i requires finite x >= 0")
    out = np.empty_like(xa)
    small = xa <= SERIES_X_MAX
    if np.any(small):
        out[small] = _series(n, xa[small], 1.0, config)
    if np.any(~small):
        out[~small] = _by_magnitude(_miller_i, n, xa[~small])
    return _scalar_or_array(out, scalar)


@lru_cache(maxsize=16)
def _g_coefficients(max_terms):
    # g(u) = sum_k (-1)**k u**k / (4**(k+1) k! (k+2)!)
    return tuple((-1) ** k / (4 ** (k + 1) * math.factorial(k) * math.factorial(k + 2)) for k in range(max_terms))


def _g_horner(u, umax, config):
    coef = _g_coefficients(config.max_terms)
    n = len(coef)
    for k in range(1, len(coef)):
        if k > umax / 4 and abs(coef[k]) * umax**k <= config.abs_tol * 1e-2 * coef[0]:
            n = k
            break
    total = np.full_like(u, coef[n - 1])
    for c in coef[n - 2 :: -1]:
        total = total * u + c
    return total


def h_over_u(u, config=DEFAULT_SERIES, damping=None):
    """g(u) = h(u)/u, entire, with g(0) = 1/8.

    With ``damping`` given, returns ``exp(-damping) * g(u)`` evaluated without
    overflow; for u < 0 this needs damping >= sqrt(-u) to stay bounded, which
    is the case in the contrast formula (xi_abs >= sqrt(xi_abs**2 - xi_coh**2)).
    """
    scalar = np.ndim(u) == 0 and np.ndim(damping) == 0
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    if damping is None:
        da = np.zeros_like(ua)
    else:
        ua, da = np.broadcast_arrays(ua, np.asarray(damping, dtype=float))
        ua = np.array(ua)
        da = np.array(da, dtype=float)
    out = np.empty_like(ua)
    small = np.abs(ua) <= SERIES_X_MAX**2
    if np.any(small):
        us = ua[small]
        g = np.empty_like(us)
        # fewer terms for smaller |u|
        for bound in (1.0, 8.0, SERIES_X_MAX**2):
            sel = (np.abs(us) <= bound) & (np.abs(us) > bound / 8 if bound > 1.0 else True)
            if np.any(sel):
                g[sel] = _g_horner(us[sel], bound, config)
        out[small] = g * np.exp(-da[small])
    pos = ~small & (ua > 0)
    if np.any(pos):
        out[pos] = _by_magnitude(_miller_j, 2, np.sqrt(ua[pos])) / ua[pos] * np.exp(-da[pos])
    neg = ~small & (ua < 0)
    if np.any(neg):
        # -I2(y) / u == I2(y) / y**2 with y = sqrt(-u)
        y = np.sqrt(-ua[neg])
        out[neg] = _by_magnitude(_miller_i, 2, y, scaled=True) / (y * y) * np.exp(y - da[neg])
    return _scalar_or_array(out, scalar)


def h_entire(u, config=DEFAULT_SERIES):
    """h(u) = J2(sqrt(u)) for u >= 0 and -I2(sqrt(-u)) for u < 0."""
    scalar = np.ndim(u) == 0
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    return _scalar_or_array(ua * h_over_u(ua, config), scalar)


def sinc_pi(y):
    """sin(y)/y with the removable singularity filled in (sinc_pi(0) == 1)."""
    scalar = np.ndim(y) == 0
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.ones_like(ya)
    nz = ya != 0
    out[nz] = np.sin(ya[nz]) / ya[nz]
    return _scalar_or_array(out, scalar)
