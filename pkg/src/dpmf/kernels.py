"""First-passage and absorbed heat kernels for unit-drift Brownian motion.

All kernels describe the process ``Y_s = x - s + W_s`` started at ``x > 0``
and killed on reaching zero.  ``sigma`` is the elapsed (time-changed) clock.

The closed forms use the scaled complementary error function so that the
``exp(2x) * erfc(...)`` products never overflow.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

SQRT2PI = np.sqrt(2.0 * np.pi)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(~np.isfinite(x)):
        raise ValueError("starting point x must be finite and positive")
    return x


def _positive(sigma):
    s = np.asarray(sigma, dtype=float)
    pos = s > 0.0
    return np.where(pos, s, 1.0), pos


def _H(sigma, x):
    """Unchecked first-passage cdf; ``x = 0`` gives 1 for ``sigma > 0``."""
    s, pos = _positive(sigma)
    x = np.asarray(x, dtype=float)
    r = np.sqrt(2.0 * s)
    # exp(2x) erfc((x+s)/r) = erfcx((x+s)/r) exp(-(x-s)^2/(2s))
    val = 0.5 * (special.erfc((x - s) / r)
                 + special.erfcx((x + s) / r) * np.exp(-(x - s) ** 2 / (2.0 * s)))
    return np.where(pos, val, 0.0)


def _h(sigma, x):
    s, pos = _positive(sigma)
    x = np.asarray(x, dtype=float)
    val = x * np.exp(-(x - s) ** 2 / (2.0 * s)) / (SQRT2PI * s ** 1.5)
    return np.where(pos, val, 0.0)


def _dh(sigma, x):
    s, pos = _positive(sigma)
    x = np.asarray(x, dtype=float)
    val = _h(s, x) * (x * x - s * s - 3.0 * s) / (2.0 * s * s)
    return np.where(pos, val, 0.0)


def fp_cdf(sigma, x):
    """Probability that the drifted walk from ``x`` has hit zero by ``sigma``.

    Parameters
    ----------
    sigma : array_like
        Elapsed time; values ``<= 0`` give 0.
    x : array_like
        Starting point, strictly positive.
    """
    return _H(sigma, _check_x(x))


def fp_pdf(sigma, x):
    """Density in ``sigma`` of the hitting time of zero (inverse Gaussian)."""
    return _h(sigma, _check_x(x))


def fp_pdf_dt(sigma, x):
    """Derivative of :func:`fp_pdf` with respect to ``sigma``."""
    return _dh(sigma, _check_x(x))


def fp_cdf_primitive(sigma, x):
    """``M(sigma, x) = int_0^sigma fp_cdf(u, x) du``.

    Uses ``M = sigma*H - E[T; T <= sigma]`` with the inverse-Gaussian
    partial mean in closed form.
    """
    s, pos = _positive(sigma)
    x = np.asarray(x, dtype=float)
    r = np.sqrt(2.0 * s)
    hi = special.erfcx((x + s) / r) * np.exp(-(x - s) ** 2 / (2.0 * s))
    lo = special.erfc((x - s) / r)
    cdf = 0.5 * (lo + hi)
    partial_mean = 0.5 * x * (lo - hi)
    return np.where(pos, s * cdf - partial_mean, 0.0)


def heat_kernel(sigma, y, x):
    """Transition density of the killed walk from ``x`` to ``y`` in time ``sigma``.

    ``y <= 0`` and ``sigma <= 0`` give 0.
    """
    x = _check_x(x)
    return _kappa(sigma, y, x)


def _kappa(sigma, y, x):
    s, pos = _positive(sigma)
    y = np.asarray(y, dtype=float)
    yy = np.maximum(y, 0.0)
    g = np.exp(-(yy - x + s) ** 2 / (2.0 * s)) / np.sqrt(2.0 * np.pi * s)
    val = g * -np.expm1(-2.0 * x * yy / s)
    return np.where(pos & (y > 0.0), val, 0.0)


def _free_primitive(sigma, a):
    """``int_0^sigma exp(-a^2/(2u) - u/2) / sqrt(2 pi u) du`` for ``a >= 0``."""
    s, pos = _positive(sigma)
    a = np.abs(np.asarray(a, dtype=float))
    r = np.sqrt(2.0 * s)
    first = np.exp(-a) * special.erfc((a - s) / r)
    second = special.erfcx((a + s) / r) * np.exp(-a * a / (2.0 * s) - s / 2.0)
    return np.where(pos, 0.5 * (first - second), 0.0)


def heat_kernel_primitive(sigma, y, x):
    """``int_0^sigma heat_kernel(u, y, x) du`` in closed form."""
    x = _check_x(x)
    return _kappa_primitive(sigma, y, x)


def _kappa_primitive(sigma, y, x):
    y = np.asarray(y, dtype=float)
    yy = np.maximum(y, 0.0)
    val = np.exp(x - yy) * (_free_primitive(sigma, yy - x) - _free_primitive(sigma, yy + x))
    return np.where(y > 0.0, val, 0.0)


# ---------------------------------------------------------------------------
# moment integrals


@dataclass(frozen=True)
class MomentIntegrals:
    """Moments of ``dh/dsigma`` at one ``sigma``.

    ``In = int dh/dsigma x^n`` for ``n = 1, 2, 3`` (signed) and
    ``J4 = int |dh/dsigma| x^4``, all over ``x > 0``.
    """
    sigma: float
    I1: float
    I2: float
    I3: float
    J4: float


def _normal_partial_moments(mu, var, a, kmax):
    """``U_k = int_0^a x^k N(x; mu, var) dx`` for ``k = 0..kmax``."""
    sd = np.sqrt(var)
    phi0 = np.exp(-mu * mu / (2 * var)) / np.sqrt(2 * np.pi * var)
    if np.isinf(a):
        phia, U0 = 0.0, special.ndtr(mu / sd)
    else:
        phia = np.exp(-(a - mu) ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var)
        U0 = special.ndtr((a - mu) / sd) - special.ndtr(-mu / sd)
    U = [U0]
    for k in range(1, kmax + 1):
        bound = (0.0 if np.isinf(a) else a ** (k - 1) * phia) - (phi0 if k == 1 else 0.0)
        prev2 = U[k - 2] if k >= 2 else 0.0
        U.append(mu * U[k - 1] + var * (k - 1) * prev2 - var * bound)
    return U


def _h_moments(sigma, a, kmax):
    """``int_0^a x^k h(sigma, x) dx`` for ``k = 0..kmax``."""
    U = _normal_partial_moments(sigma, sigma, a, kmax + 1)
    return [U[k + 1] / sigma for k in range(kmax + 1)]


def _abs_dh_fourth_moment(sigma):
    # dh/dsigma changes sign once, at x* = sqrt(sigma^2 + 3 sigma).  Integrating
    # the backward equation dh/dsigma = -dh/dx + h''/2 by parts gives the
    # signed integral over [0, a] in terms of truncated moments of h.
    xs = np.sqrt(sigma * sigma + 3 * sigma)
    full = _h_moments(sigma, np.inf, 3)
    signed_total = 4 * full[3] + 6 * full[2]
    T = _h_moments(sigma, xs, 3)
    ha = float(_h(sigma, xs))
    dhdx = ha * (1.0 / xs - (xs - sigma) / sigma)
    part = -ha * xs ** 4 + 0.5 * dhdx * xs ** 4 - 2 * ha * xs ** 3 + 4 * T[3] + 6 * T[2]
    return signed_total - 2.0 * part


def moment_integrals(sigma: float) -> MomentIntegrals:
    """Closed-form weighted moments of the first-passage density."""
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    e = np.exp(-sigma / 2)
    E = 1.0 + special.erf(np.sqrt(sigma / 2))
    rt = np.sqrt(2 * np.pi * sigma)
    I1 = e / rt + 0.5 * E
    I2 = e * (1 + 2 * sigma) / rt + (1.5 + sigma) * E
    I3 = 3 * (e * (3 + sigma) * np.sqrt(sigma / (2 * np.pi))
              + (0.5 + sigma * (2 + sigma / 2)) * E)
    return MomentIntegrals(sigma, I1, I2, I3, _abs_dh_fourth_moment(sigma))


# ---------------------------------------------------------------------------
# small-sigma functionals


def _derivs_at_zero(q, h=1e-3):
    # one-sided polynomial fit, good to O(h^4) for smooth q
    xs = h * np.arange(7)
    coef = np.polynomial.polynomial.polyfit(xs, [float(q(v)) for v in xs], 6)
    return [coef[k] * np.prod(np.arange(1, k + 1)) for k in range(4)]


def _kernel_quad(kern, q, sigma):
    root = np.sqrt(sigma)
    top = sigma + 60.0 * root + 1.0
    pts = [0.0] + [c * root for c in (0.5, 1, 2, 4, 8, 16, 32)] + [top]
    pts = sorted(set(p for p in pts if p <= top))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(lambda v: float(kern(sigma, v)) * float(q(v)), a, b,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return total


def small_sigma_functional(q: Callable[[float], float], sigma: float, order: str = "pdf"):
    """Quadrature of ``int h(sigma,x) q(x) dx`` or its ``sigma`` derivative.

    Parameters
    ----------
    q : callable
        Smooth test function with at most polynomial growth.
    sigma : float
        Positive evaluation time.
    order : {"pdf", "pdf_dt"}
        Kernel to integrate against.

    Notes
    -----
    The ``pdf`` functional only has a finite small-``sigma`` limit when
    ``q(0) = 0``; ``pdf_dt`` additionally needs ``q'(0) + q''(0)/2 = 0``.
    Both are checked and a violation raises ``ValueError``.
    """
    if order not in ("pdf", "pdf_dt"):
        raise ValueError("order must be 'pdf' or 'pdf_dt'")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    d = _derivs_at_zero(q)
    scale = 1.0 + max(abs(v) for v in d)
    if abs(d[0]) > 1e-8 * scale:
        raise ValueError("test function must vanish at zero")
    if order == "pdf_dt" and abs(d[1] + d[2] / 2) > 1e-5 * scale:
        raise ValueError("test function must satisfy q'(0) + q''(0)/2 = 0")
    kern = _h if order == "pdf" else _dh
    return _kernel_quad(kern, q, sigma)


def richardson_sqrt(sigmas, values):
    """Extrapolate ``values(sigma)`` to ``sigma = 0`` assuming a series in ``sqrt(sigma)``."""
    t = np.sqrt(np.asarray(sigmas, dtype=float))
    v = np.asarray(values, dtype=float)
    coef = np.polynomial.polynomial.polyfit(t, v, len(t) - 1)
    return float(coef[0])


def small_sigma_limit(q, order="pdf", sigmas=(1e-2, 1e-3, 1e-4)):
    """Extrapolated ``sigma -> 0`` limit of :func:`small_sigma_functional`."""
    vals = [small_sigma_functional(q, s, order) for s in sigmas]
    return richardson_sqrt(sigmas, vals)


def limit_formula(q, order="pdf"):
    """Limit predicted from the derivatives of ``q`` at zero."""
    d = _derivs_at_zero(q)
    if order == "pdf":
        return d[1] / 2
    return 0.5 * (d[2] + d[3] / 2)
