"""Vector autoregression on stacked coefficient series, with block-wise merging.

Series are arrays of shape ``(R, tau, d)``: ``R`` independent realizations of
a ``d``-dimensional process observed at ``tau`` time points.  The model is

    s_t = Phi_1 s_{t-1} + ... + Phi_P s_{t-P} + xi_t,   xi_t ~ N(0, K)

written compactly as ``s_t = Phi^T S_t + xi_t`` with the lag vector
``S_t = (s_{t-1}, ..., s_{t-P})`` and ``Phi`` of shape ``(d P, d)`` whose
``p``-th row block is ``Phi_p^T``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, NumericalError

PINV_RTOL = 1e-10
JITTER_RTOL = 1e-10


@dataclass
class BlockFit:
    """Sufficient statistics and least-squares estimates from one block."""

    Phi: np.ndarray
    K: np.ndarray
    X: np.ndarray
    n_eff: int
    pseudo_inverse: bool = False


@dataclass
class VarState:
    """Cumulative VAR(P) estimates.

    ``X`` is the accumulated lag Gram matrix and ``n_eff`` the number of
    design rows behind it (``sum_b R (tau_b - P)``).
    """

    Phi: np.ndarray
    K: np.ndarray
    X: np.ndarray
    n_eff: int
    P: int

    @property
    def dim(self):
        return self.K.shape[0]

    @property
    def A(self):
        return self.dim // 2

    def lag_matrices(self):
        return lag_matrices(self.Phi, self.P)

    @classmethod
    def from_fit(cls, fit, P):
        return cls(fit.Phi.copy(), fit.K.copy(), fit.X.copy(), fit.n_eff, P)


def stack_coefficients(u, v):
    """Stack U and V coefficients into one series, U(1..A) first then V(1..A)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ConfigurationError(f"U block {u.shape} and V block {v.shape} differ in shape")
    return np.concatenate([u, v], axis=-1)


def split_coefficients(series):
    """Inverse of :func:`stack_coefficients`."""
    series = np.asarray(series)
    A = series.shape[-1] // 2
    return series[..., :A], series[..., A:]


def lag_matrices(Phi, P):
    """``[Phi_1, ..., Phi_P]`` from the stacked ``(d P, d)`` matrix."""
    d = Phi.shape[1]
    return [Phi[p * d:(p + 1) * d].T for p in range(P)]


def stack_lag_matrices(mats):
    """Stacked ``(d P, d)`` matrix from ``[Phi_1, ..., Phi_P]``."""
    return np.vstack([np.asarray(m, dtype=np.float64).T for m in mats])


def _as_series(series):
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 2:
        series = series[None]
    if series.ndim != 3:
        raise ConfigurationError(f"series must have shape (R, tau, d), got {series.shape}")
    return series


def design(series, P):
    """Lag vectors and targets for every usable time point.

    Returns ``(S, Y)`` of shapes ``(R (tau - P), d P)`` and ``(R (tau - P), d)``;
    the first ``P`` points of each realization serve only as lags.
    """
    series = _as_series(series)
    R, tau, d = series.shape
    if P < 1:
        raise ConfigurationError("lag order P must be at least 1")
    if tau < P + 1:
        raise InsufficientDataError(f"block of length {tau} is shorter than P + 1 = {P + 1}")
    S = np.concatenate([series[:, P - p:tau - p] for p in range(1, P + 1)], axis=-1)
    return S.reshape(-1, d * P), series[:, P:].reshape(-1, d)


def _sym_pinv(X, rtol=PINV_RTOL):
    lam, V = np.linalg.eigh(X)
    cut = rtol * max(lam.max(), 0.0)
    keep = lam > cut
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    return (V * inv) @ V.T, not keep.all()


def _solve_spd(X, B):
    """Solve ``X Z = B`` for symmetric ``X``, adding jitter if needed."""
    try:
        c = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        jitter = JITTER_RTOL * np.trace(X) / X.shape[0]
        try:
            c = np.linalg.cholesky(X + jitter * np.eye(X.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"accumulated Gram matrix is not positive definite even with jitter {jitter:.3g}"
            ) from exc
        warnings.warn(f"Gram matrix singular; solved with jitter {jitter:.3g}", RuntimeWarning, stacklevel=3)
    y = np.linalg.solve(c, B)
    return np.linalg.solve(c.T, y)


def _symmetrize(K):
    return 0.5 * (K + K.T)


def fit_block(series, P, ridge=0.0):
    """Least-squares VAR(P) fit on one block of ``(R, tau, d)`` series.

    A rank-deficient Gram matrix is handled with a symmetric pseudo-inverse
    (eigenvalues below ``1e-10 * max`` discarded).  ``ridge`` adds
    ``ridge * I`` to the Gram matrix before solving; the returned ``X`` is
    the unregularized Gram matrix.
    """
    S, Y = design(series, P)
    X = S.T @ S
    SY = S.T @ Y
    YY = Y.T @ Y
    n = S.shape[0]
    if ridge > 0:
        Phi = _solve_spd(X + ridge * np.eye(X.shape[0]), SY)
        pinv_used = False
    else:
        Xinv, pinv_used = _sym_pinv(X)
        Phi = Xinv @ SY
    K = _symmetrize(YY - Phi.T @ X @ Phi) / n
    return BlockFit(Phi, K, X, n, pinv_used)


def fit_pooled(blocks, P, ridge=0.0):
    """Single least-squares fit on the union of every block's design rows.

    Lags never cross block boundaries, so this is the batch counterpart of
    merging the blocks one at a time with :func:`update_var_online`.
    """
    X = SY = YY = None
    n = 0
    for series in blocks:
        S, Y = design(series, P)
        if X is None:
            X, SY, YY = S.T @ S, S.T @ Y, Y.T @ Y
        else:
            X += S.T @ S
            SY += S.T @ Y
            YY += Y.T @ Y
        n += S.shape[0]
    if X is None:
        raise InsufficientDataError("no blocks given")
    Xr = X + ridge * np.eye(X.shape[0]) if ridge > 0 else X
    Phi = _solve_spd(Xr, SY)
    K = _symmetrize(YY - Phi.T @ X @ Phi) / n
    return BlockFit(Phi, K, X, n)


def update_var_online(state, fit, ridge=0.0):
    """Merge a block fit into the cumulative state.

    ``Phi = (X_old + X_b)^{-1} (X_old Phi_old + X_b Phi_b)`` and

        n K = n_old K_old + n_b K_b + Phi_old' X_old Phi_old
              + Phi_b' X_b Phi_b - Phi' X Phi

    which reproduces the pooled-design batch fit.
    """
    if fit.Phi.shape != state.Phi.shape or fit.X.shape != state.X.shape:
        raise ConfigurationError(
            f"block fit {fit.Phi.shape} does not match state {state.Phi.shape}")
    X = state.X + fit.X
    rhs = state.X @ state.Phi + fit.X @ fit.Phi
    Xr = X + ridge * np.eye(X.shape[0]) if ridge > 0 else X
    Phi = _solve_spd(Xr, rhs)
    n = state.n_eff + fit.n_eff
    total = (state.n_eff * state.K + fit.n_eff * fit.K
             + state.Phi.T @ state.X @ state.Phi + fit.Phi.T @ fit.X @ fit.Phi
             - Phi.T @ X @ Phi)
    K = _symmetrize(total) / n
    return VarState(Phi, K, _symmetrize(X), n, state.P)


def companion_matrix(Phi, P):
    d = Phi.shape[1]
    top = np.hstack(lag_matrices(Phi, P))
    if P == 1:
        return top
    shift = np.hstack([np.eye(d * (P - 1)), np.zeros((d * (P - 1), d))])
    return np.vstack([top, shift])


def stability_check(Phi, P):
    """Spectral radius of the companion matrix; values ``>= 1`` are unstable."""
    return float(np.abs(np.linalg.eigvals(companion_matrix(np.asarray(Phi, dtype=np.float64), P))).max())


def innovation_factor(K):
    """Symmetric square-root factor of ``K`` with negative eigenvalues clipped."""
    K = np.asarray(K, dtype=np.float64)
    if not np.all(np.isfinite(K)):
        raise NumericalError("innovation covariance contains non-finite entries")
    try:
        lam, V = np.linalg.eigh(_symmetrize(K))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition of the innovation covariance failed") from exc
    return V * np.sqrt(np.clip(lam, 0.0, None))


def simulate_var(Phi, K, P, length, rng, n_series=1, initial=None):
    """Simulate ``n_series`` independent trajectories of ``length`` points.

    Lags are drawn from ``N(0, K)`` unless ``initial`` (shape
    ``(n_series, P, d)``, oldest first) is given.  Innovations are drawn in
    time-major order, so consecutive calls that carry the lags forward
    consume the generator exactly as one long call would.

    Returns an array ``(n_series, length, d)``.
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    d = Phi.shape[1]
    L = innovation_factor(K)
    rho = stability_check(Phi, P)
    if rho >= 1.0:
        warnings.warn(f"VAR is not stable (spectral radius {rho:.4f}); simulating anyway",
                      RuntimeWarning, stacklevel=2)
    if initial is None:
        lags = rng.standard_normal((P, n_series, d)) @ L.T
    else:
        lags = np.transpose(np.asarray(initial, dtype=np.float64), (1, 0, 2)).copy()
    noise = rng.standard_normal((length, n_series, d)) @ L.T
    mats = lag_matrices(Phi, P)
    out = np.empty((length, n_series, d))
    hist = list(lags)  # oldest first
    for t in range(length):
        x = noise[t].copy()
        for p, M in enumerate(mats, start=1):
            x += hist[-p] @ M.T
        out[t] = x
        hist.append(x)
        hist.pop(0)
    return np.transpose(out, (1, 0, 2))
