"""Slepian concentration on a region of the sphere.

The concentration matrix of a region is the Gram matrix of the band-limited
real harmonics under the region inner product.  Its eigenvectors define the
Slepian functions; the eigenvalues are the fraction of each function's energy
that falls inside the region.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DomainError, IllPosedAnalysisError, NumericalError, SelectionError
from .harmonics import harmonic_matrix, quadrature_weights, region_gram

DEFAULT_THRESHOLD = 0.01


@dataclass(frozen=True, eq=False)
class ConcentrationMatrix:
    C: np.ndarray
    Q: int
    fingerprint: str
    area_fraction: float


@dataclass(frozen=True, eq=False)
class SlepianBasis:
    """Retained Slepian functions for a region.

    Attributes
    ----------
    eigenvalues : (A,) concentration of each retained function, descending.
    spectrum : (Q**2,) full eigenvalue sequence (clamped to [0, 1]).
    G : (Q**2, A) spectral coefficients; columns are orthonormal.
    samples : (n_masked, A) function values on the region cells, ``H_mask @ G``.
    weights : (n_masked,) quadrature weights of the region cells.
    """

    eigenvalues: np.ndarray
    spectrum: np.ndarray
    G: np.ndarray
    samples: np.ndarray
    weights: np.ndarray
    Q: int
    shannon: float
    fingerprint: str

    @property
    def A(self):
        return self.G.shape[1]

    @property
    def n_masked(self):
        return self.samples.shape[0]

    def truncate(self, A):
        if not 1 <= A <= self.spectrum.size:
            raise SelectionError(f"cannot retain {A} of {self.spectrum.size} functions")
        return SlepianBasis(self.spectrum[:A].copy(), self.spectrum, self.G[:, :A].copy(),
                            self.samples[:, :A].copy(), self.weights, self.Q,
                            self.shannon, self.fingerprint)


def build_concentration_matrix(grid, Q, quadrature="gauss", order=None):
    """Region Gram matrix of the real harmonics up to degree ``Q - 1``.

    With ``quadrature="midpoint"`` the entries are
    ``sum_{c in region} w_c H[c, k] H[c, k']`` using cell-centre values.  The
    default ``"gauss"`` integrates each region cell with a Gauss-Legendre
    product rule, which keeps the spectrum inside ``[0, 1]`` to rounding
    error even when ``Q`` is large relative to the grid spacing.
    """
    if quadrature == "midpoint":
        H = harmonic_matrix(grid, Q, masked_only=True)
        w = quadrature_weights(grid)[grid.mask]
        C = (H * w[:, None]).T @ H
        C = 0.5 * (C + C.T)
        area = w.sum()
    elif quadrature == "gauss":
        C, area = region_gram(grid, Q, order=order)
    else:
        raise ConfigurationError(f"unknown quadrature {quadrature!r}")
    return ConcentrationMatrix(C, Q, grid.fingerprint, float(area / (4 * np.pi)))


def region_inner_products(basis, grid, order=None):
    """``<g_a, g_b>_R`` for the retained functions, by sub-cell quadrature."""
    gram, _ = region_gram(grid, basis.Q, functions=basis.G, order=order)
    return gram


def _fix_signs(V, rel_tol=1e-12):
    # first coefficient that is not numerically zero is made positive
    scale = np.abs(V).max(axis=0)
    nonzero = np.abs(V) > rel_tol * scale
    first = np.argmax(nonzero, axis=0)
    signs = np.sign(V[first, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def solve_concentration(conc):
    """Eigenpairs of the concentration matrix, sorted by decreasing eigenvalue.

    Returns ``(eigenvalues, G)`` with eigenvalues clamped to ``[0, 1]`` and
    the sign of each eigenvector fixed so that its first non-negligible entry
    is positive.  Within a repeated eigenvalue the solver's basis is kept.
    """
    C = conc.C
    if not np.all(np.isfinite(C)):
        raise NumericalError("concentration matrix contains non-finite entries")
    try:
        lam, V = scipy.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigensolver failed for {C.shape} matrix (trace={np.trace(C):.6g}, "
            f"asymmetry={np.abs(C - C.T).max():.3g})"
        ) from exc
    order = np.argsort(-lam, kind="stable")
    lam = np.clip(lam[order], 0.0, 1.0)
    V = _fix_signs(V[:, order])
    return lam, V


def shannon_number(area_fraction, Q):
    """Expected count of well-concentrated functions, ``area_fraction * Q**2``."""
    if not 0.0 < area_fraction <= 1.0:
        raise DomainError(f"area fraction must lie in (0, 1], got {area_fraction}")
    return area_fraction * Q * Q


def select_basis_count(eigenvalues, threshold=DEFAULT_THRESHOLD):
    """Largest ``A`` with ``eigenvalues[A-1] >= threshold`` (eigenvalues descending)."""
    lam = np.asarray(eigenvalues)
    keep = np.nonzero(lam >= threshold)[0]
    if keep.size == 0:
        raise SelectionError(f"no eigenvalue reaches the threshold {threshold}")
    return int(keep[-1]) + 1


def slepian_basis(grid, Q, threshold=DEFAULT_THRESHOLD, A=None, quadrature="gauss"):
    """Build, solve and truncate the concentration problem for ``grid``.

    ``A`` overrides the threshold rule when given.
    """
    conc = build_concentration_matrix(grid, Q, quadrature=quadrature)
    lam, V = solve_concentration(conc)
    if A is None:
        A = select_basis_count(lam, threshold)
    elif not 1 <= A <= lam.size:
        raise SelectionError(f"A={A} outside [1, {lam.size}]")
    H = harmonic_matrix(grid, Q, masked_only=True)
    G = V[:, :A].copy()
    w = quadrature_weights(grid)[grid.mask]
    return SlepianBasis(lam[:A].copy(), lam, G, H @ G, w, Q,
                        shannon_number(min(conc.area_fraction, 1.0), Q), grid.fingerprint)


def _factor(samples):
    Qm, Rm = np.linalg.qr(samples)
    d = np.abs(np.diag(Rm))
    if samples.shape[1] > samples.shape[0] or d.min() <= 1e-10 * d.max():
        raise IllPosedAnalysisError(
            f"{samples.shape[1]} basis functions are not identifiable on "
            f"{samples.shape[0]} region cells"
        )
    return Qm, Rm


def analyze(z, basis, ensemble_axis=-3):
    """Least-squares Slepian coefficients of region fields.

    Parameters
    ----------
    z : array (..., R, tau, n_masked)
        Random-effect fields on region cells.
    basis : SlepianBasis
    ensemble_axis : int
        Axis of ``z`` that indexes ensemble members; the residual variance
        is averaged over it.

    Returns
    -------
    s : array (..., R, tau, A)
    sigma2 : residual variance per cell, ``z`` shape with the ensemble axis
        removed.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != basis.n_masked:
        raise ConfigurationError(
            f"field has {z.shape[-1]} cells but the basis has {basis.n_masked}")
    Qm, Rm = _factor(basis.samples)
    s = scipy.linalg.solve_triangular(Rm, (z @ Qm).reshape(-1, basis.A).T).T
    s = s.reshape(z.shape[:-1] + (basis.A,))
    resid = z - s @ basis.samples.T
    sigma2 = np.mean(resid * resid, axis=ensemble_axis)
    return s, sigma2


def synthesize(s, basis):
    """Fields on region cells from coefficients: ``samples @ s`` along the last axis."""
    return np.asarray(s, dtype=np.float64) @ basis.samples.T
