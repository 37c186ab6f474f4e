"""Tukey h Gaussianization with a Lambert W inverse, and streaming moments.

A standard normal ``u`` is mapped to a heavy-tailed value by
``s = omega * u * exp(h * u**2 / 2)``.  The inverse is closed form through
the principal branch of the Lambert W function.  The scale and tail
parameters are recovered from the second moment and the kurtosis, both of
which can be merged exactly across data blocks.

The module also carries the estimating-equation machinery for the Tukey g
(skewness) parameter and its block-wise merge.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DomainError, NumericalError

H_CAP = 0.24
FORWARD_CLAMP = 40.0


def lambert_w0(x, tol=1e-12, max_iter=50):
    """Principal branch of the Lambert W function for ``x >= 0``.

    Halley iteration started from ``log1p(x)``; vectorized over arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("lambert_w0 is only defined here for x >= 0")
    w = np.log1p(x)
    for _ in range(max_iter):
        ew = np.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w = w - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(w))):
            break
    else:
        raise NumericalError("Lambert W iteration did not converge")
    return w if w.ndim else float(w)


def tukey_h_forward(u, omega, h):
    """``omega * u * exp(h u^2 / 2)``; ``|u|`` is clamped at 40 with a warning."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(np.abs(u) > FORWARD_CLAMP):
        warnings.warn("standard-normal input clamped to |u| <= 40", RuntimeWarning, stacklevel=2)
        u = np.clip(u, -FORWARD_CLAMP, FORWARD_CLAMP)
    return omega * u * np.exp(0.5 * h * u * u)


def _w_h(x, h):
    x = np.asarray(x, dtype=np.float64)
    h = np.broadcast_to(np.asarray(h, dtype=np.float64), np.broadcast(x, h).shape)
    x = np.broadcast_to(x, h.shape)
    out = np.array(x, dtype=np.float64, copy=True)
    pos = h > 0
    if np.any(pos):
        hp = h[pos]
        xp = x[pos]
        out[pos] = np.sign(xp) * np.sqrt(lambert_w0(hp * xp * xp) / hp)
    return out


def tukey_h_inverse(s, omega, h):
    """Standard-normal value whose Tukey h transform is ``s``."""
    res = _w_h(np.asarray(s, dtype=np.float64) / omega, h)
    return res if res.ndim else float(res)


def theoretical_kurtosis(h):
    """Kurtosis ``3 (1-2h)^3 (1-4h)^(-5/2)`` of a Tukey h variable."""
    h = np.asarray(h, dtype=np.float64)
    if np.any(h < 0) or np.any(h >= 0.25):
        raise DomainError("kurtosis of the Tukey h family exists only for 0 <= h < 1/4")
    k = 3.0 * (1.0 - 2.0 * h) ** 3 * (1.0 - 4.0 * h) ** -2.5
    return k if k.ndim else float(k)


def estimate_moments(s, axis=None):
    """Second moment and kurtosis with divisor ``n`` (no centring)."""
    s = np.asarray(s, dtype=np.float64)
    n = s.size if axis is None else np.prod([s.shape[a] for a in np.atleast_1d(axis)])
    if n < 2:
        raise DegenerateError("need at least two values to estimate moments")
    s2 = s * s
    gamma = s2.mean(axis=axis)
    if np.any(gamma <= 0):
        raise DegenerateError("series is identically zero; moments are undefined")
    kappa = (s2 * s2).mean(axis=axis) / gamma**2
    return gamma, kappa


def moments_to_params(gamma, kappa, h_cap=H_CAP):
    """Scale and tail parameters from moments via the truncated kurtosis expansion.

    ``h = [sqrt(66 kappa - 162) - 6]_+ / 66`` (capped at ``h_cap``) and
    ``omega = sqrt(gamma (1 - 2h)^{3/2})``.  Returns ``(omega, h, capped)``.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    radicand = np.maximum(66.0 * kappa - 162.0, 0.0)
    h = np.maximum((np.sqrt(radicand) - 6.0) / 66.0, 0.0)
    capped = h > h_cap
    if np.any(capped):
        warnings.warn(f"{int(np.sum(capped))} tail parameter(s) capped at {h_cap}",
                      RuntimeWarning, stacklevel=2)
        h = np.minimum(h, h_cap)
    omega = np.sqrt(gamma * (1.0 - 2.0 * h) ** 1.5)
    return omega, h, capped


@dataclass
class TukeyMomentState:
    """Cumulative second moments and kurtoses, one per (variable, index).

    ``count`` is the number of scalar samples merged so far for every entry.
    """

    gamma: np.ndarray
    kappa: np.ndarray
    count: int = 0
    h_cap: float = H_CAP

    @classmethod
    def from_series(cls, s, axis):
        gamma, kappa = estimate_moments(s, axis=axis)
        n = int(np.prod([np.shape(s)[a] for a in np.atleast_1d(axis)]))
        return cls(np.atleast_1d(gamma), np.atleast_1d(kappa), n)

    def params(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return moments_to_params(self.gamma, self.kappa, self.h_cap)

    @property
    def omega(self):
        return self.params()[0]

    @property
    def h(self):
        return self.params()[1]


def update_moments_online(state, block_gamma, block_kappa, block_count):
    """Merge one block's moments into the cumulative state.

    The second moment is a count-weighted average; the kurtosis is averaged
    with weights ``count * gamma**2`` so that the merged value equals the
    kurtosis of the concatenated data.
    """
    if block_count < 1:
        raise DomainError("block must contain at least one sample")
    n, m = state.count, block_count
    total = n + m
    gamma = (n * state.gamma + m * block_gamma) / total
    if np.any(gamma <= 0):
        raise DegenerateError("cumulative second moment vanished; kurtosis weights undefined")
    kappa = (n * state.gamma**2 * state.kappa + m * block_gamma**2 * block_kappa) / (total * gamma**2)
    return TukeyMomentState(gamma, kappa, total, state.h_cap)


# --- Tukey g -----------------------------------------------------------------

def tukey_g_forward(u, g):
    """``(exp(g u) - 1) / g`` (identity at ``g = 0``)."""
    u = np.asarray(u, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    gu = g * u
    small = np.abs(gu) < 1e-8
    safe_g = np.where(g == 0, 1.0, g)
    return np.where(small, u * (1.0 + 0.5 * gu), np.expm1(gu) / safe_g)


def tukey_g_inverse(y, g):
    """``log(1 + g y) / g``; requires ``1 + g y > 0``."""
    y = np.asarray(y, dtype=np.float64)
    gy = g * y
    if np.any(gy <= -1.0):
        raise DomainError("1 + g*y must be positive for the Tukey g inverse")
    if g == 0:
        return y.copy()
    return np.log1p(gy) / g


# Series of f(x)/x^3 and its derivative, f(x) = (1+x) log(1+x)^2 - x log(1+x).
_PHI_SERIES = (1 / 2, -5 / 12, 1 / 3, -49 / 180, 41 / 180, -109 / 560)


def _phi_ratio(x):
    """``f(x) / x**3`` and its derivative in ``x``."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < 1e-2
    xs = np.where(small, x, 0.0)
    val_s = sum(c * xs**k for k, c in enumerate(_PHI_SERIES))
    der_s = sum(k * c * xs ** (k - 1) for k, c in enumerate(_PHI_SERIES) if k)
    xl = np.where(small, 1.0, x)
    L = np.log1p(xl)
    f = (1.0 + xl) * L * L - xl * L
    df = L * L + L - xl / (1.0 + xl)
    val_l = f / xl**3
    der_l = df / xl**3 - 3.0 * f / xl**4
    return np.where(small, val_s, val_l), np.where(small, der_s, der_l)


def g_estimating_function(g, y, form="likelihood"):
    """Skewness estimating function summed over ``y`` and its slope in ``g``.

    ``form="likelihood"`` (default) is the score of the Tukey g
    log-likelihood including the Jacobian term ``-log(1 + g y)``; its root
    is a consistent estimate of ``g``.  ``form="psi"`` drops the Jacobian and
    uses ``psi_t(g) = (1+gy) log(1+gy)^2 - gy log(1+gy)`` divided by
    ``g**3`` (``psi`` vanishes identically at ``g = 0``).  For skewed data the
    ``psi`` form often has no root inside the log domain.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    x = g * y
    if np.any(x <= -1.0):
        raise DomainError("log-domain violated: 1 + g*y <= 0 for some samples")
    val, der = _phi_ratio(x)
    y3 = y**3
    if form == "psi":
        return float(np.sum(y3 * val)), float(np.sum(y3 * y * der))
    if form == "likelihood":
        u = 1.0 + x
        score = (y3 * val - y) / u
        slope = y * y * (y * y * der / u - (y * y * val - 1.0) / (u * u))
        return float(np.sum(score)), float(np.sum(slope))
    raise ValueError(f"unknown estimating-equation form {form!r}")


def solve_tukey_g(y, form="likelihood", tol=1e-10, max_iter=100):
    """Root of the skewness estimating equation by safeguarded Newton.

    Returns ``(g, slope)`` where ``slope`` is the derivative of the summed
    estimating function at the root.  Iterates stay inside the log domain
    ``1 + g y > 0``; a sign bracket is kept and bisection replaces Newton
    steps that leave it.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise DomainError("series contains non-finite values")
    n = y.size
    scale = max(float(np.mean(np.abs(y) ** 3)), 1e-300)
    lo = -1.0 / y.max() if y.max() > 0 else -np.inf
    hi = -1.0 / y.min() if y.min() < 0 else np.inf
    g = 0.0
    for _ in range(max_iter):
        psi, dpsi = g_estimating_function(g, y, form)
        if abs(psi) <= tol * n * scale:
            return g, dpsi
        # the estimating function decreases in g on the domain
        if psi > 0:
            lo = g
        else:
            hi = g
        g_new = g - psi / dpsi if dpsi < 0 else np.nan
        if not lo < g_new < hi:
            if np.isfinite(lo) and np.isfinite(hi):
                g_new = 0.5 * (lo + hi)
            else:
                edge = lo if np.isfinite(lo) else hi
                g_new = 0.5 * (g + edge) if np.isfinite(edge) else g + np.sign(psi)
        if abs(g_new - g) <= 1e-15 * max(1.0, abs(g)):
            raise NumericalError(
                f"skewness estimating equation has no root inside the log domain "
                f"(bracket collapsed at g={g_new:.6g}, residual {psi:.3g})")
        g = g_new
    raise NumericalError("skewness estimating equation did not converge in 100 iterations")


@dataclass
class TukeyGState:
    """Merged skewness estimate and accumulated estimating-equation slope."""

    g: float = 0.0
    slope: float = 0.0
    blocks: int = 0


def tukey_g_online_update(state, y, form="likelihood"):
    """Solve the block's estimating equation and merge it into ``state``.

    The merged estimate is the slope-weighted average of the block estimates,
    ``(beta_prev g_prev + beta_b g_b) / (beta_prev + beta_b)``.  Returns the
    new state and the block's own estimate.
    """
    g_b, beta_b = solve_tukey_g(y, form)
    if state.blocks == 0:
        return TukeyGState(g_b, beta_b, 1), g_b
    total = state.slope + beta_b
    if total == 0:
        raise DegenerateError("accumulated estimating-equation slope is zero")
    g = (state.slope * state.g + beta_b * g_b) / total
    return TukeyGState(g, total, state.blocks + 1), g_b
