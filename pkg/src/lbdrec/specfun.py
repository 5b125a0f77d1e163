"""Beta-family special functions with parameter derivatives.

Everything here is vectorized over numpy broadcasting.  The regularized
incomplete beta function is evaluated with the modified Lentz algorithm on
the classic continued fraction, and its derivatives with respect to the two
shape parameters come from differentiating the Lentz recurrences term by
term (forward mode), so the value and the three partials share a single
pass over the fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np
from scipy.special import betaln, digamma, gammaln, xlog1py, xlogy

__all__ = [
    "BetaShape",
    "BoundaryWarning",
    "ConvergenceError",
    "DomainError",
    "beta_pdf",
    "betainc",
    "betainc_grad",
    "log_beta",
    "logistic_cdf",
]

MAX_ITER = 300
CF_EPS = 1e-15
_TINY = 1e-300


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class ConvergenceError(ArithmeticError):
    """The continued fraction did not converge within ``MAX_ITER`` steps."""

    def __init__(self, x, alpha, beta):
        self.x, self.alpha, self.beta = x, alpha, beta
        super().__init__(
            f"incomplete beta continued fraction did not converge "
            f"(x={x!r}, alpha={alpha!r}, beta={beta!r})"
        )


class BoundaryWarning(RuntimeWarning):
    """A density was evaluated at an endpoint where it diverges."""


@dataclass(frozen=True)
class BetaShape:
    """Shape parameters of a beta distribution."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and positive, got {v!r}")

    @classmethod
    def from_mean_confidence(cls, mu, nu):
        return cls(mu * nu, (1.0 - mu) * nu)

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    @property
    def confidence(self):
        return self.alpha + self.beta

    @property
    def variance(self):
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))


def _check_shapes(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("beta shape parameters must be finite")
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("beta shape parameters must be positive")
    return a, b


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0.0) | ~(x <= 1.0)):
        raise DomainError("x must lie in [0, 1]")
    return x


def _scalarize(v):
    return v.item() if isinstance(v, np.ndarray) and v.ndim == 0 else v


def log_beta(alpha, beta):
    """``ln B(alpha, beta)``."""
    a, b = _check_shapes(alpha, beta)
    return _scalarize(_betaln(a, b))


def beta_pdf(x, alpha, beta):
    """Beta density.  Diverging endpoint values come back as ``inf``
    together with a :class:`BoundaryWarning`."""
    a, b = _check_shapes(alpha, beta)
    x = _check_unit(x)
    x, a, b = np.broadcast_arrays(x, a, b)
    with np.errstate(divide="ignore", over="ignore"):
        logp = xlogy(a - 1.0, x) + xlog1py(b - 1.0, -x) - _betaln(a, b)
        out = np.exp(logp)
    if np.any(np.isinf(out)):
        warnings.warn("beta density diverges at an endpoint", BoundaryWarning,
                      stacklevel=2)
    return _scalarize(out)


def logistic_cdf(z):
    """Standard logistic CDF, stable for large ``|z|``."""
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return _scalarize(out)


def _cf_coefficients(j, a, b, x):
    """Partial numerators of the incomplete-beta fraction and their
    derivatives in ``a`` and ``b``.  ``j`` is the (scalar) term index."""
    if j % 2:
        m = (j - 1) // 2
        coef = -(a + m) * (a + b + m) * x / ((a + 2 * m) * (a + 2 * m + 1))
        da = coef * (1.0 / (a + m) + 1.0 / (a + b + m)
                     - 1.0 / (a + 2 * m) - 1.0 / (a + 2 * m + 1))
        db = coef / (a + b + m)
    else:
        m = j // 2
        den = (a + 2 * m - 1) * (a + 2 * m)
        coef = m * (b - m) * x / den
        da = -coef * (1.0 / (a + 2 * m - 1) + 1.0 / (a + 2 * m))
        db = m * x / den
    return coef, da, db


def _lentz(x, a, b, grad):
    """Return ``ln g`` (and its ``a``/``b`` derivatives) for
    ``g = 1 + d1/(1 + d2/(1 + ...))`` so that ``I = K / g``.

    Arrays are 1-d and already restricted to the fast-converging region.
    """
    size = x.shape[0]
    log_g = np.zeros(size)
    dlog_a = np.zeros(size)
    dlog_b = np.zeros(size)
    C = np.ones(size)
    D = np.zeros(size)
    dC_a = np.zeros(size)  # relative derivative of C, i.e. C'/C
    dC_b = np.zeros(size)
    eD_a = np.zeros(size)  # absolute derivative of D
    eD_b = np.zeros(size)
    active = np.arange(size)
    done = np.zeros(size, dtype=bool)

    for j in range(1, 2 * MAX_ITER + 1):
        xa, aa, ba = x[active], a[active], b[active]
        coef, da, db = _cf_coefficients(j, aa, ba, xa)
        Cp, Dp = C[active], D[active]
        Dn = 1.0 + coef * Dp
        Dn = np.where(np.abs(Dn) < _TINY, _TINY, Dn)
        Dn = 1.0 / Dn
        Cn = 1.0 + coef / Cp
        Cn = np.where(np.abs(Cn) < _TINY, _TINY, Cn)
        step = Cn * Dn
        log_g[active] += np.log(step)
        conv = np.abs(step - 1.0) < CF_EPS
        if grad:
            rDa = -Dn * (da * Dp + coef * eD_a[active])
            rDb = -Dn * (db * Dp + coef * eD_b[active])
            rCa = (da - coef * dC_a[active]) / (Cp * Cn)
            rCb = (db - coef * dC_b[active]) / (Cp * Cn)
            inc_a = rCa + rDa
            inc_b = rCb + rDb
            dlog_a[active] += inc_a
            dlog_b[active] += inc_b
            dC_a[active], dC_b[active] = rCa, rCb
            eD_a[active], eD_b[active] = Dn * rDa, Dn * rDb
            conv &= np.abs(inc_a) <= CF_EPS * (1.0 + np.abs(dlog_a[active]))
            conv &= np.abs(inc_b) <= CF_EPS * (1.0 + np.abs(dlog_b[active]))
        C[active], D[active] = Cn, Dn
        # only stop after an even term so partial fractions come in pairs
        if j % 2 == 0 and np.any(conv):
            done[active[conv]] = True
            active = active[~conv]
            if active.size == 0:
                break
    if active.size:
        k = active[0]
        raise ConvergenceError(float(x[k]), float(a[k]), float(b[k]))
    return log_g, dlog_a, dlog_b


_STIRLING_MIN = 15.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _stirling_corr(z):
    """``lgamma(z) - ((z - 1/2) ln z - z + ln(2 pi)/2)`` for ``z >= 15``."""
    r = 1.0 / (z * z)
    return (1.0 / z) * (1.0 / 12 - r * (1.0 / 360 - r * (1.0 / 1260 - r * (
        1.0 / 1680 - r * (1.0 / 1188)))))


def _betaln(a, b):
    """``ln B(a, b)``, accurate also when one argument is large.

    With ``q = max(a, b) >= 15`` the difference ``lgamma(q) - lgamma(p + q)``
    is taken from Stirling's series instead of subtracting two large values.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.array(betaln(a, b), dtype=float)
    p, q = np.minimum(a, b), np.maximum(a, b)
    big = q >= _STIRLING_MIN
    if not np.any(big):
        return out
    p, q = p[big], q[big]
    s = p + q
    both = p >= _STIRLING_MIN
    corr = _stirling_corr(q) - _stirling_corr(s)
    small_p = gammaln(p) - p * np.log(s) - (q - 0.5) * np.log1p(p / q) + p + corr
    pp = np.where(both, p, _STIRLING_MIN)
    large_p = (_HALF_LOG_2PI + (pp - 0.5) * np.log(pp / s) + (q - 0.5) * np.log(q / s)
               - 0.5 * np.log(s) + _stirling_corr(pp) + corr)
    out[big] = np.where(both, large_p, small_p)
    return out


def _log_prefactor(x, p, q):
    """``p ln x + q ln(1 - x) - ln B(p, q)``.

    For large shapes the direct sum cancels terms in the thousands, so it is
    rewritten around the mode ``x0 = p / (p + q)`` with Stirling corrections.
    """
    direct = xlogy(p, x) + xlog1py(q, -x) - _betaln(p, q)
    big = (p >= _STIRLING_MIN) & (q >= _STIRLING_MIN)
    if not np.any(big):
        return direct
    pb, qb, xb = p[big], q[big], x[big]
    s = pb + qb
    x0 = pb / s
    d = xb - x0
    with np.errstate(divide="ignore"):   # x in {0, 1} gives -inf, i.e. zero
        around = pb * np.log1p(d / x0) + qb * np.log1p(-d / (1.0 - x0))
    const = (0.5 * np.log(pb * qb / s) - _HALF_LOG_2PI
             - _stirling_corr(pb) - _stirling_corr(qb) + _stirling_corr(s))
    direct[big] = around + const
    return direct


def _betainc_core(x, a, b, grad):
    x, a, b = np.broadcast_arrays(x, a, b)
    shape = x.shape
    x, a, b = x.ravel(), a.ravel(), b.ravel()
    value = np.where(x >= 1.0, 1.0, 0.0)
    comp = 1.0 - value
    d_a = np.zeros_like(value)
    d_b = np.zeros_like(value)

    inner = (x > 0.0) & (x < 1.0)
    swap = inner & (x >= (a + 1.0) / (a + b + 2.0))
    for flip in (False, True):
        sel = np.flatnonzero(inner & (swap == flip))
        if sel.size == 0:
            continue
        if flip:
            xx, p, q = 1.0 - x[sel], b[sel], a[sel]
        else:
            xx, p, q = x[sel], a[sel], b[sel]
        log_k = _log_prefactor(xx, p, q) - np.log(p)
        log_g, dg_p, dg_q = _lentz(xx, p, q, grad)
        part = np.exp(log_k - log_g)
        if grad:
            psi_pq = digamma(p + q)
            dl_p = np.log(xx) - 1.0 / p - digamma(p) + psi_pq - dg_p
            dl_q = np.log1p(-xx) - digamma(q) + psi_pq - dg_q
            dp, dq = part * dl_p, part * dl_q
        if flip:
            value[sel], comp[sel] = 1.0 - part, part
            if grad:
                d_a[sel], d_b[sel] = -dq, -dp
        else:
            value[sel], comp[sel] = part, 1.0 - part
            if grad:
                d_a[sel], d_b[sel] = dp, dq
    return (value.reshape(shape), comp.reshape(shape),
            d_a.reshape(shape), d_b.reshape(shape))


def betainc(x, alpha, beta):
    """Regularized incomplete beta function ``I_x(alpha, beta)``."""
    a, b = _check_shapes(alpha, beta)
    x = _check_unit(x)
    value, _, _, _ = _betainc_core(x, a, b, grad=False)
    return _scalarize(np.clip(value, 0.0, 1.0))


def betainc_grad(x, alpha, beta):
    """Partials ``(dI/dx, dI/dalpha, dI/dbeta)`` of the incomplete beta.

    Only interior points are accepted; the endpoints are constants for every
    caller in this package.
    """
    a, b = _check_shapes(alpha, beta)
    x = _check_unit(x)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise DomainError("betainc_grad requires 0 < x < 1")
    _, _, d_a, d_b = _betainc_core(x, a, b, grad=True)
    d_x = beta_pdf(x, a, b)
    return _scalarize(np.asarray(d_x)), _scalarize(d_a), _scalarize(d_b)


def betainc_with_grad(x, alpha, beta):
    """``(I, 1 - I, dI/dx, dI/dalpha, dI/dbeta)`` in one pass, interior ``x``.

    Unchecked fast path used by the models (inputs are already valid).  The
    complement is computed directly, so upper-tail masses keep full relative
    precision.
    """
    value, comp, d_a, d_b = _betainc_core(x, alpha, beta, grad=True)
    with np.errstate(divide="ignore", over="ignore"):
        d_x = np.exp(xlogy(alpha - 1.0, x) + xlog1py(beta - 1.0, -x)
                     - _betaln(alpha, beta))
    return np.clip(value, 0.0, 1.0), np.clip(comp, 0.0, 1.0), d_x, d_a, d_b


def betainc_fast(x, alpha, beta):
    """Unchecked vectorized ``(I_x, 1 - I_x)``; the models' evaluation path."""
    value, comp, _, _ = _betainc_core(x, alpha, beta, grad=False)
    return np.clip(value, 0.0, 1.0), np.clip(comp, 0.0, 1.0)


def interval_mass(x_lo, x_hi, alpha, beta):
    """``I(x_hi) - I(x_lo)`` taking upper-tail differences on complements."""
    lo, lo_c = betainc_fast(x_lo, alpha, beta)
    hi, hi_c = betainc_fast(x_hi, alpha, beta)
    return np.where(lo > 0.5, lo_c - hi_c, hi - lo)


def cdf_to_masses(cdf, comp):
    """Bin masses from CDF values at all ``n + 1`` edges (last axis)."""
    lower = cdf[..., :-1] > 0.5
    return np.where(lower, comp[..., :-1] - comp[..., 1:], np.diff(cdf, axis=-1))
