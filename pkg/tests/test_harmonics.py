import numpy as np
import pytest
import scipy.special
from hypothesis import given
from hypothesis import strategies as st

from slepian_osg.errors import CapacityError, UnsupportedGridError
from slepian_osg.harmonics import (
    RegionGrid,
    degree_order,
    flat_index,
    harmonic_matrix,
    harmonic_values,
    quadrature_weights,
    region_gram,
)


def real_harmonic_oracle(q, m, theta, psi):
    # scipy includes the Condon-Shortley phase; strip it and take real parts
    cs = (-1.0) ** abs(m)
    if hasattr(scipy.special, "sph_harm_y"):
        Y = scipy.special.sph_harm_y(q, abs(m), theta, psi)
    else:
        Y = scipy.special.sph_harm(abs(m), q, psi, theta)
    if m == 0:
        return Y.real
    if m > 0:
        return cs * np.sqrt(2.0) * Y.real
    return cs * np.sqrt(2.0) * Y.imag


@given(st.integers(0, 60), st.data())
def test_flat_index_round_trip(q, data):
    m = data.draw(st.integers(-q, q))
    k = flat_index(q, m)
    assert 0 <= k < (q + 1) ** 2
    assert tuple(map(int, degree_order(k))) == (q, m)


def test_flat_ordering_starts_with_low_degrees():
    pairs = [tuple(map(int, degree_order(k))) for k in range(5)]
    assert pairs == [(0, 0), (1, -1), (1, 0), (1, 1), (2, -2)]


def test_constant_harmonic_value():
    H = harmonic_matrix(RegionGrid.global_grid(10.0), 3)
    assert np.allclose(H[:, 0], 0.28209479, atol=1e-8)


def test_zonal_degree_one_at_pole():
    v = harmonic_values([0.0], [0.3], 2)
    assert v[0, flat_index(1, 0)] == pytest.approx(0.4886025, abs=1e-7)


def test_matches_independent_oracle(rng):
    theta = rng.uniform(0, np.pi, 25)
    psi = rng.uniform(0, 2 * np.pi, 25)
    Q = 12
    H = harmonic_values(theta, psi, Q)
    for q in range(Q):
        for m in range(-q, q + 1):
            ref = real_harmonic_oracle(q, m, theta, psi)
            assert np.allclose(H[:, flat_index(q, m)], ref, atol=1e-12), (q, m)


def test_global_midpoint_orthonormality():
    grid = RegionGrid.global_grid(2.0)
    H = harmonic_matrix(grid, 8)
    w = quadrature_weights(grid).ravel()
    gram = (H * w[:, None]).T @ H
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() < 1e-3


def test_orthonormality_error_shrinks_with_spacing():
    errs = []
    for spacing in (4.0, 2.0, 1.0):
        grid = RegionGrid.global_grid(spacing)
        H = harmonic_matrix(grid, 8)
        w = quadrature_weights(grid).ravel()
        errs.append(np.abs((H * w[:, None]).T @ H - np.eye(64)).max())
    assert errs[0] > errs[1] > errs[2]


def test_sub_cell_gauss_rule_is_exact_on_sphere():
    grid = RegionGrid.global_grid(6.0)
    gram, area = region_gram(grid, 10)
    assert np.abs(gram - np.eye(100)).max() < 1e-12
    assert area == pytest.approx(4 * np.pi, rel=1e-13)


def test_weights_sum_to_sphere_area():
    for spacing in (2.0, 1.0):
        w = quadrature_weights(RegionGrid.global_grid(spacing))
        assert w.sum() == pytest.approx(4 * np.pi, rel=0.01)


def test_single_row_equator_weights():
    grid = RegionGrid([0.0], np.arange(0.5, 10.0, 1.0), np.ones((1, 10), bool), dlat=1.0)
    w = quadrature_weights(grid)
    assert np.allclose(w, (np.pi / 180) ** 2)


def test_hemisphere_area():
    grid = RegionGrid.global_grid(0.5)
    mask = grid.latitudes[:, None] > 0
    w = quadrature_weights(grid)[np.broadcast_to(mask, grid.shape)]
    assert w.sum() == pytest.approx(2 * np.pi, rel=0.01)


def test_parity_under_reflection(rng):
    theta = rng.uniform(0.05, np.pi - 0.05, 30)
    psi = rng.uniform(0, 2 * np.pi, 30)
    Q = 15
    a = harmonic_values(theta, psi, Q)
    b = harmonic_values(np.pi - theta, psi, Q)
    for q in range(Q):
        for m in range(-q, q + 1):
            k = flat_index(q, m)
            assert np.allclose(b[:, k], (-1) ** (q + m) * a[:, k], atol=1e-12)


def test_high_degree_recurrence_stays_bounded():
    theta = np.linspace(1e-3, np.pi - 1e-3, 301)
    H = harmonic_values(theta, np.zeros_like(theta), 201)
    assert np.all(np.isfinite(H))
    peak = np.abs(H).max(axis=0)
    q, _ = degree_order(np.arange(H.shape[1]))
    assert np.all(peak <= 2.0 * np.sqrt((2 * q + 1) / (4 * np.pi)) + 1e-12)


def test_capacity_cap():
    with pytest.raises(CapacityError):
        harmonic_matrix(RegionGrid.global_grid(30.0), 10, max_harmonics=50)


def test_non_uniform_grid_rejected():
    with pytest.raises(UnsupportedGridError):
        RegionGrid([0.0, 1.0, 3.0], [0.0, 1.0], np.ones((3, 2), bool))


def test_empty_mask_rejected():
    with pytest.raises(UnsupportedGridError):
        RegionGrid([0.0, 1.0], [0.0, 1.0], np.zeros((2, 2), bool))


def test_fingerprint_depends_on_mask():
    g = RegionGrid.global_grid(10.0)
    mask = g.mask.copy()
    mask[0, 0] = False
    assert g.fingerprint == RegionGrid.global_grid(10.0).fingerprint
    assert g.with_mask(mask).fingerprint != g.fingerprint
