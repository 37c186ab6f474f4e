"""Indices comparing emulated ensembles with reference ensembles.

Ensemble arrays passed to the per-cell and per-time indices have shape
``(R, T, n_cells)``; the two sides may have different ``R``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateError, InsufficientDataError


def central_region_area(series):
    """Sum over time of the ensemble interquartile range.

    ``series`` has the ensemble on axis 0 and time on axis 1; any further
    axes (e.g. cells) are kept.  Quantiles interpolate linearly between
    order statistics.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.shape[0] < 4:
        raise InsufficientDataError(f"need at least 4 ensemble members for quartiles, got {series.shape[0]}")
    q25, q75 = np.quantile(series, [0.25, 0.75], axis=0, method="linear")
    return (q75 - q25).sum(axis=0)


def index_uq(emulated, reference):
    """Ratio of emulated to reference central region area, per cell."""
    ref = central_region_area(reference)
    if np.any(ref <= 0):
        raise DegenerateError(f"{int(np.sum(ref <= 0))} cell(s) have zero reference spread")
    return central_region_area(emulated) / ref


def wasserstein_1d(x, y):
    """Order-1 Wasserstein distance between two empirical distributions.

    Integrates ``|F_x - F_y|`` over the merged sorted support.
    """
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise ConfigurationError("both samples must be non-empty")
    merged = np.concatenate([x, y])
    merged.sort(kind="mergesort")
    gaps = np.diff(merged)
    fx = np.searchsorted(x, merged[:-1], side="right") / x.size
    fy = np.searchsorted(y, merged[:-1], side="right") / y.size
    return float(np.sum(np.abs(fx - fy) * gaps))


def _check_pair(emulated, reference):
    emulated = np.asarray(emulated, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if emulated.ndim != 3 or reference.ndim != 3 or emulated.shape[1:] != reference.shape[1:]:
        raise ConfigurationError(
            f"emulated {emulated.shape} and reference {reference.shape} must be (R, T, cells) "
            "with matching T and cells")
    return emulated, reference


def index_wdt(emulated, reference):
    """Per-cell distance pooling all members and time points."""
    emulated, reference = _check_pair(emulated, reference)
    n = reference.shape[2]
    return np.array([wasserstein_1d(emulated[..., c], reference[..., c]) for c in range(n)])


def index_wds(emulated, reference):
    """Per-time distance pooling all members and cells."""
    emulated, reference = _check_pair(emulated, reference)
    T = reference.shape[1]
    return np.array([wasserstein_1d(emulated[:, t], reference[:, t]) for t in range(T)])


def ensemble_sd(series):
    """Time-mean of the ensemble standard deviation (``ddof=1``), per cell."""
    series = np.asarray(series, dtype=np.float64)
    if series.shape[0] < 2:
        raise InsufficientDataError("need at least 2 ensemble members")
    return series.std(axis=0, ddof=1).mean(axis=0)


def index_rq(emulated, reference):
    """Emulated minus reference time-mean ensemble spread, per cell.

    Negative values mean the emulations are too confident.
    """
    emulated, reference = _check_pair(emulated, reference)
    return ensemble_sd(emulated) - ensemble_sd(reference)


def _residual(target, cond):
    coef, _, rank, _ = np.linalg.lstsq(cond, target, rcond=None)
    return target - cond @ coef, rank


def _pac_entry(x, y, p, same=False):
    """Partial correlation of ``x_t`` and ``y_{t-p}`` given the intermediate lags.

    ``x`` and ``y`` are ``(R, T)``; rows from different members are pooled.
    ``same`` marks an auto-correlation, whose lags enter the conditioning
    set once.
    """
    T = x.shape[1]
    xt = x[:, p:].ravel()
    yl = y[:, :T - p].ravel()
    cols = [np.ones(xt.size)]
    for k in range(1, p):
        cols.append(x[:, p - k:T - k].ravel())
        if not same:
            cols.append(y[:, p - k:T - k].ravel())
    cond = np.column_stack(cols)
    rx, rank_x = _residual(xt, cond)
    ry, _ = _residual(yl, cond)
    if rank_x < cond.shape[1]:
        return np.nan
    den = np.sqrt((rx @ rx) * (ry @ ry))
    if den <= 1e-300:
        return np.nan
    return float(np.clip((rx @ ry) / den, -1.0, 1.0))


def pac_matrix(series, p):
    """Partial autocorrelation blocks at lag ``p`` for a stacked ``(U, V)`` series.

    ``series`` is ``(T, 2A)`` or ``(R, T, 2A)``.  Returns a dict with the
    ``A x A`` blocks ``"U"``, ``"V"``, ``"UV"`` (U now, V lagged) and ``"VU"``;
    entries whose conditioning regression is singular are NaN.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 2:
        series = series[None]
    if p < 1:
        raise ConfigurationError("lag p must be at least 1")
    if series.shape[1] < 10 * p:
        raise InsufficientDataError(f"series of length {series.shape[1]} is too short for lag {p}")
    d = series.shape[2]
    if d % 2:
        raise ConfigurationError("stacked series must have an even dimension 2A")
    full = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            full[i, j] = _pac_entry(series[:, :, i], series[:, :, j], p, same=i == j)
    A = d // 2
    return {"U": full[:A, :A], "V": full[A:, A:], "UV": full[:A, A:], "VU": full[A:, :A]}


@dataclass
class IndexReport:
    """Per-cell and per-time indices for one variable."""

    uq: np.ndarray
    wdt: np.ndarray
    rq: np.ndarray
    wds: np.ndarray
    reference_sd: np.ndarray

    def summary(self, quantiles=(0.05, 0.25, 0.5, 0.75, 0.95)):
        out = {}
        for name in ("uq", "wdt", "rq", "wds"):
            values = getattr(self, name)
            out[name] = dict(zip([f"q{int(q * 100):02d}" for q in quantiles],
                                 np.quantile(values, quantiles).tolist()))
        return out


def compute_indices(emulated, reference):
    """All indices for one variable; inputs are ``(R, T, cells)``."""
    emulated, reference = _check_pair(emulated, reference)
    return IndexReport(
        uq=index_uq(emulated, reference),
        wdt=index_wdt(emulated, reference),
        rq=index_rq(emulated, reference),
        wds=index_wds(emulated, reference),
        reference_sd=ensemble_sd(reference),
    )
