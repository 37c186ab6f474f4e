import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import wasserstein_distance

from slepian_osg.errors import ConfigurationError, DegenerateError, InsufficientDataError
from slepian_osg.metrics import (
    central_region_area,
    compute_indices,
    index_rq,
    index_uq,
    index_wds,
    index_wdt,
    pac_matrix,
    wasserstein_1d,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
samples = arrays(np.float64, st.integers(1, 30), elements=finite)


def test_cra_quartile_example():
    series = np.repeat(np.arange(4.0)[:, None], 10, axis=1)
    assert central_region_area(series) == pytest.approx(15.0)


def test_cra_identical_members_is_zero(rng):
    row = rng.standard_normal(50)
    assert central_region_area(np.tile(row, (6, 1))) == 0.0


def test_cra_keeps_cell_axis(rng):
    x = rng.standard_normal((8, 20, 3))
    cra = central_region_area(x)
    assert cra.shape == (3,)
    assert cra[1] == pytest.approx(central_region_area(x[:, :, 1]))


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3), seed=st.integers(0, 2**31))
def test_cra_homogeneity(c, seed):
    x = np.random.default_rng(seed).standard_normal((7, 15))
    assert central_region_area(c * x) == pytest.approx(abs(c) * central_region_area(x), rel=1e-12)


def test_cra_needs_four_members():
    with pytest.raises(InsufficientDataError):
        central_region_area(np.zeros((3, 5)))


def test_uq_identity_scaling_and_degenerate(rng):
    ref = rng.standard_normal((10, 40, 5))
    assert np.allclose(index_uq(ref, ref), 1.0)
    centred = ref - np.median(ref, axis=0)
    assert np.allclose(index_uq(2 * centred, centred), 2.0)
    assert np.allclose(index_uq(-3.5 * ref, -3.5 * ref[::-1]), 1.0)
    with pytest.raises(DegenerateError):
        index_uq(ref, np.zeros_like(ref))


@settings(max_examples=200, deadline=None)
@given(x=samples, y=samples)
def test_wasserstein_matches_scipy(x, y):
    assert wasserstein_1d(x, y) == pytest.approx(wasserstein_distance(x, y), rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(x=samples, y=samples, z=samples)
def test_wasserstein_metric_axioms(x, y, z):
    dxy = wasserstein_1d(x, y)
    assert dxy >= 0
    assert dxy == pytest.approx(wasserstein_1d(y, x), rel=1e-12, abs=1e-12)
    assert wasserstein_1d(x, x) == 0.0
    assert dxy <= wasserstein_1d(x, z) + wasserstein_1d(z, y) + 1e-9 * (1 + dxy)


def test_wasserstein_examples(rng):
    assert wasserstein_1d([0.0], [1.0]) == 1.0
    x = rng.standard_normal(100_000)
    assert wasserstein_1d(x, x + 0.5) == pytest.approx(0.5, abs=1e-12)
    y = rng.standard_normal(100_000) + 0.5
    # the distance between two independent samples fluctuates at O(n^-1/2)
    assert wasserstein_1d(x, y) == pytest.approx(0.5, abs=3 * 3 / np.sqrt(x.size))
    with pytest.raises(ConfigurationError):
        wasserstein_1d([], [1.0])


def test_wdt_wds_shift_identity(rng):
    ref = rng.standard_normal((6, 30, 4))
    assert not index_wdt(ref, ref).any()
    assert not index_wds(ref, ref).any()
    assert np.allclose(index_wdt(ref + 0.7, ref), 0.7)
    assert np.allclose(index_wds(ref - 0.2, ref), 0.2)
    assert index_wds(ref, ref).shape == (30,)
    with pytest.raises(ConfigurationError):
        index_wdt(ref[:, :20], ref)


def test_rq_sign_and_doubling(rng):
    ref = rng.standard_normal((12, 25, 3))
    assert np.allclose(index_rq(ref, ref), 0.0)
    mean = ref.mean(axis=0)
    doubled = mean + 2 * (ref - mean)
    sd = ref.std(axis=0, ddof=1).mean(axis=0)
    assert np.allclose(index_rq(doubled, ref), sd)
    assert np.all(index_rq(0.5 * ref, ref) < 0)


def test_indices_invariant_to_member_relabeling(rng):
    em = rng.standard_normal((8, 20, 3))
    ref = rng.standard_normal((10, 20, 3))
    a = compute_indices(em, ref)
    b = compute_indices(em[rng.permutation(8)], ref[rng.permutation(10)])
    for name in ("uq", "wdt", "rq", "wds", "reference_sd"):
        assert np.allclose(getattr(a, name), getattr(b, name), rtol=1e-12)
    assert np.all(a.uq > 0) and np.all(a.wdt >= 0) and np.all(a.wds >= 0)
    summary = a.summary()
    assert set(summary) == {"uq", "wdt", "rq", "wds"}
    assert summary["uq"]["q05"] <= summary["uq"]["q50"] <= summary["uq"]["q95"]


def test_pac_white_noise(rng):
    T = 10_000
    x = rng.standard_normal((T, 6))
    for p in (1, 2):
        blocks = pac_matrix(x, p)
        worst = max(np.abs(b).max() for b in blocks.values())
        assert worst < 4 / np.sqrt(T)


def ar1(rng, phi, T, d, R=1):
    x = np.zeros((R, T, d))
    e = rng.standard_normal((R, T, d))
    for t in range(1, T):
        x[:, t] = phi * x[:, t - 1] + e[:, t]
    return x


def test_pac_ar1_identity_and_cutoff(rng):
    x = ar1(rng, 0.6, 5000, 4)
    lag1 = pac_matrix(x, 1)
    assert np.allclose(np.diag(lag1["U"]), 0.6, atol=0.03)
    assert np.allclose(np.diag(lag1["V"]), 0.6, atol=0.03)
    assert np.abs(lag1["UV"]).max() < 0.06
    lag2 = pac_matrix(x, 2)
    assert np.abs(np.diag(lag2["U"])).max() < 0.06
    assert np.abs(np.diag(lag2["V"])).max() < 0.06


def test_pac_lag1_is_cross_correlation(rng):
    x = ar1(rng, 0.5, 400, 2)[0]
    blocks = pac_matrix(x, 1)
    ref = np.corrcoef(x[1:, 0], x[:-1, 1])[0, 1]
    assert blocks["UV"][0, 0] == pytest.approx(ref, abs=1e-12)


def test_pac_flags_singular_entries(rng):
    x = rng.standard_normal((300, 4))
    x[:, 1] = 1.0
    blocks = pac_matrix(x, 2)
    assert np.isnan(blocks["U"][1, 1])
    assert np.isfinite(blocks["V"]).all()
    defined = np.concatenate([b[np.isfinite(b)] for b in blocks.values()])
    assert np.all(np.abs(defined) <= 1.0)


def test_pac_checks_inputs(rng):
    with pytest.raises(InsufficientDataError):
        pac_matrix(rng.standard_normal((15, 4)), 2)
    with pytest.raises(ConfigurationError):
        pac_matrix(rng.standard_normal((100, 3)), 1)
    with pytest.raises(ConfigurationError):
        pac_matrix(rng.standard_normal((100, 4)), 0)
