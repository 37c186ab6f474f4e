"""Real spherical harmonics on regular latitude-longitude grids.

Harmonics are fully normalized so that they are orthonormal over the unit
sphere, without the Condon-Shortley phase:

    h_q^m(theta, psi) = Pbar_q^|m|(cos theta) * { sqrt(2) cos(m psi)    m > 0
                                                 { 1                    m = 0
                                                 { sqrt(2) sin(|m| psi) m < 0

with ``Pbar`` normalized such that ``h_0^0 = 1/sqrt(4 pi)``.  The flat
harmonic index is ``k = q**2 + q + m``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, UnsupportedGridError

#: default ceiling on Q**2 (number of harmonics per grid cell)
MAX_HARMONICS = 250_000


def flat_index(q, m):
    """Flat harmonic index for degree ``q`` and order ``m``."""
    return q * q + q + m


def degree_order(k):
    """Inverse of :func:`flat_index`."""
    k = np.asarray(k)
    q = np.floor(np.sqrt(k)).astype(int)
    return q, k - q * q - q


def _uniform_step(values, name):
    diffs = np.diff(values)
    if np.any(diffs <= 0):
        raise UnsupportedGridError(f"{name} must be strictly ascending")
    step = diffs[0]
    if not np.allclose(diffs, step, rtol=1e-6, atol=1e-9):
        raise UnsupportedGridError(f"{name} spacing is not uniform")
    return float(step)


@dataclass(frozen=True, eq=False)
class RegionGrid:
    """A regular lat-lon grid of cell centres plus a region mask.

    ``mask`` has shape ``(nlat, nlon)``; cells are flattened in row-major
    (latitude-major) order everywhere in this package.  ``dlat``/``dlon``
    may be given explicitly for grids with a single row or column.
    """

    latitudes: np.ndarray
    longitudes: np.ndarray
    mask: np.ndarray
    dlat: float | None = None
    dlon: float | None = None
    _fingerprint: str = field(init=False, repr=False)

    def __post_init__(self):
        lat = np.ascontiguousarray(self.latitudes, dtype=np.float64).ravel()
        lon = np.ascontiguousarray(self.longitudes, dtype=np.float64).ravel()
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if mask.shape != (lat.size, lon.size):
            raise UnsupportedGridError(
                f"mask shape {mask.shape} does not match grid ({lat.size}, {lon.size})"
            )
        if not mask.any():
            raise UnsupportedGridError("region mask has no cells inside the region")
        if np.any(np.abs(lat) >= 90.0):
            raise UnsupportedGridError("cell centres must lie strictly between the poles")
        dlat = self.dlat if self.dlat is not None else (
            _uniform_step(lat, "latitudes") if lat.size > 1 else None)
        dlon = self.dlon if self.dlon is not None else (
            _uniform_step(lon, "longitudes") if lon.size > 1 else None)
        if lat.size > 1 and self.dlat is not None:
            _uniform_step(lat, "latitudes")
        if lon.size > 1 and self.dlon is not None:
            _uniform_step(lon, "longitudes")
        if dlat is None or dlon is None:
            raise UnsupportedGridError("grid spacing undefined for a single row/column; pass dlat/dlon")
        object.__setattr__(self, "latitudes", lat)
        object.__setattr__(self, "longitudes", lon)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "dlat", float(dlat))
        object.__setattr__(self, "dlon", float(dlon))
        digest = hashlib.sha256()
        for arr in (lat, lon, np.array([dlat, dlon])):
            digest.update(arr.astype("<f8").tobytes())
        digest.update(np.packbits(mask.ravel()).tobytes())
        object.__setattr__(self, "_fingerprint", digest.hexdigest()[:16])

    @classmethod
    def global_grid(cls, spacing, mask=None):
        """Cell-centred global grid with the given spacing in degrees."""
        lat = np.arange(-90.0 + spacing / 2, 90.0, spacing)
        lon = np.arange(spacing / 2, 360.0, spacing)
        if mask is None:
            mask = np.ones((lat.size, lon.size), dtype=bool)
        return cls(lat, lon, mask)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def n_cells(self):
        return self.mask.size

    @property
    def n_masked(self):
        return int(self.mask.sum())

    @property
    def fingerprint(self):
        return self._fingerprint

    @property
    def colatitudes(self):
        return np.pi / 2 - np.deg2rad(self.latitudes)

    @property
    def azimuths(self):
        return np.deg2rad(self.longitudes)

    def cell_coordinates(self, masked_only=False):
        """Latitude and longitude of every cell (or only masked cells)."""
        lat2, lon2 = np.meshgrid(self.latitudes, self.longitudes, indexing="ij")
        if masked_only:
            return lat2[self.mask], lon2[self.mask]
        return lat2.ravel(), lon2.ravel()

    def with_mask(self, mask):
        return RegionGrid(self.latitudes, self.longitudes, mask, self.dlat, self.dlon)


def quadrature_weights(grid):
    """Midpoint-rule area weights (steradians) for every grid cell.

    Returns an array of shape ``(nlat, nlon)`` with
    ``w = cos(lat) * dtheta * dpsi``.
    """
    row = np.cos(np.deg2rad(grid.latitudes)) * np.deg2rad(grid.dlat) * np.deg2rad(grid.dlon)
    return np.repeat(row[:, None], grid.longitudes.size, axis=1)


def legendre_table(colatitudes, Q):
    """Fully normalized associated Legendre values ``Pbar_q^m(cos theta)``.

    Returns an array ``P[q, m, i]`` for ``0 <= m <= q < Q``.  The sectoral
    terms are seeded in closed form and the remaining degrees follow the
    standard three-term recurrence, which is stable well past degree 200.
    """
    theta = np.atleast_1d(np.asarray(colatitudes, dtype=np.float64))
    x = np.cos(theta)
    s = np.sin(theta)
    P = np.zeros((Q, Q, theta.size))
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, Q):
        P[m, m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(Q - 1):
        P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
        for q in range(m + 2, Q):
            a = np.sqrt((4.0 * q * q - 1.0) / (q * q - m * m))
            b = np.sqrt(((q - 1.0) ** 2 - m * m) / (4.0 * (q - 1.0) ** 2 - 1.0))
            P[q, m] = a * (x * P[q - 1, m] - b * P[q - 2, m])
    return P


def harmonic_values(colatitudes, azimuths, Q):
    """Real harmonics at scattered points; returns ``(npoints, Q**2)``."""
    theta = np.atleast_1d(np.asarray(colatitudes, dtype=np.float64))
    psi = np.atleast_1d(np.asarray(azimuths, dtype=np.float64))
    P = legendre_table(theta, Q)
    out = np.empty((theta.size, Q * Q))
    root2 = np.sqrt(2.0)
    for q in range(Q):
        out[:, flat_index(q, 0)] = P[q, 0]
        for m in range(1, q + 1):
            out[:, flat_index(q, m)] = root2 * P[q, m] * np.cos(m * psi)
            out[:, flat_index(q, -m)] = root2 * P[q, m] * np.sin(m * psi)
    return out


def _harmonics_on_cells(colat_rows, psi_cols, rows, cols, Q):
    P = legendre_table(colat_rows, Q)  # (Q, Q, nrows)
    H = np.empty((rows.size, Q * Q))
    root2 = np.sqrt(2.0)
    for q in range(Q):
        H[:, flat_index(q, 0)] = P[q, 0, rows]
    for m in range(1, Q):
        c = root2 * np.cos(m * psi_cols)[cols]
        s = root2 * np.sin(m * psi_cols)[cols]
        for q in range(m, Q):
            p = P[q, m, rows]
            H[:, flat_index(q, m)] = p * c
            H[:, flat_index(q, -m)] = p * s
    return H


def _check_capacity(Q, max_harmonics):
    if Q < 1:
        raise CapacityError("band-limit Q must be at least 1")
    if Q * Q > max_harmonics:
        raise CapacityError(f"Q**2 = {Q * Q} exceeds the harmonic cap {max_harmonics}")


def _cell_indices(grid, masked_only):
    if masked_only:
        return np.nonzero(grid.mask)
    nlat, nlon = grid.shape
    return np.divmod(np.arange(nlat * nlon), nlon)


def harmonic_matrix(grid, Q, masked_only=False, max_harmonics=MAX_HARMONICS):
    """Matrix ``H[c, k] = h_q^m(theta_c, psi_c)`` at grid-cell centres.

    Rows follow the row-major cell order of ``grid.mask``; with
    ``masked_only`` only cells inside the region are returned.
    """
    _check_capacity(Q, max_harmonics)
    rows, cols = _cell_indices(grid, masked_only)
    return _harmonics_on_cells(grid.colatitudes, grid.azimuths, rows, cols, Q)


def default_cell_order(grid, Q):
    """Gauss order per cell axis that resolves degree-``Q`` products on ``grid``."""
    width = np.deg2rad(max(grid.dlat, grid.dlon))
    return int(min(12, np.ceil(2.0 * Q * width) + 4))


def cell_quadrature_nodes(grid, order, masked_only=True):
    """Gauss-Legendre product nodes inside each cell.

    Nodes are placed in ``mu = sin(lat)`` (so the area element is
    ``dmu dpsi`` and the rule is exact for polynomials in ``mu``) and in
    longitude.  Yields ``(colat_rows, psi_cols, rows, cols, weights)`` once
    per node pair, with one entry per selected cell.
    """
    x, wx = np.polynomial.legendre.leggauss(order)
    rows, cols = _cell_indices(grid, masked_only)
    half_lat = np.deg2rad(grid.dlat) / 2
    half_lon = np.deg2rad(grid.dlon) / 2
    lat = np.deg2rad(grid.latitudes)
    lo = np.sin(np.clip(lat - half_lat, -np.pi / 2, np.pi / 2))
    hi = np.sin(np.clip(lat + half_lat, -np.pi / 2, np.pi / 2))
    for xi, wi in zip(x, wx):
        mu = 0.5 * (hi + lo) + 0.5 * (hi - lo) * xi
        colat_rows = np.arccos(np.clip(mu, -1.0, 1.0))
        w_rows = 0.5 * (hi - lo) * wi
        for xj, wj in zip(x, wx):
            psi_cols = grid.azimuths + half_lon * xj
            yield colat_rows, psi_cols, rows, cols, w_rows[rows] * half_lon * wj


def region_gram(grid, Q, functions=None, order=None, max_harmonics=MAX_HARMONICS):
    """Region integrals of harmonic products with a sub-cell Gauss rule.

    Returns ``sum_nodes w F F^T`` where ``F`` are the harmonics at the
    nodes, optionally mapped through ``functions`` (a ``(Q**2, n)`` matrix of
    spectral coefficients).  Also returns the total region area.
    """
    _check_capacity(Q, max_harmonics)
    order = default_cell_order(grid, Q) if order is None else order
    n = Q * Q if functions is None else functions.shape[1]
    gram = np.zeros((n, n))
    area = 0.0
    for colat, psi, rows, cols, w in cell_quadrature_nodes(grid, order):
        F = _harmonics_on_cells(colat, psi, rows, cols, Q)
        if functions is not None:
            F = F @ functions
        gram += (F * w[:, None]).T @ F
        area += w.sum()
    return 0.5 * (gram + gram.T), area
