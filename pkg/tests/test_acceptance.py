"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
"acceptance criteria" section of the summary.
"""
import time
import warnings

import numpy as np
import pytest

from slepian_osg import containers
from slepian_osg.harmonics import RegionGrid
from slepian_osg.metrics import central_region_area, compute_indices, pac_matrix, wasserstein_1d
from slepian_osg.pipeline import (
    SCENARIOS,
    emulate,
    fit_initial,
    generate_synthetic,
    ingest_block,
    make_truth,
    rfd,
)
from slepian_osg.slepian import (
    build_concentration_matrix,
    region_inner_products,
    shannon_number,
    slepian_basis,
    solve_concentration,
)
from slepian_osg.tukey import (
    TukeyMomentState,
    estimate_moments,
    moments_to_params,
    tukey_h_forward,
    tukey_h_inverse,
    update_moments_online,
)
from slepian_osg.var import VarState, fit_block, fit_pooled, simulate_var, update_var_online

LONG_R = 10
LONG_LENGTHS = [2000] * 10
STREAM_SEED = 1


@pytest.fixture(scope="module")
def long_run(basis, truth):
    """Fit the 10 x 2000 stream block by block, keeping every intermediate Phi."""
    start = time.perf_counter()
    blocks = list(generate_synthetic(truth, LONG_R, LONG_LENGTHS, seed=STREAM_SEED))
    model = fit_initial(blocks[0], basis)
    history = [model.var.Phi]
    for block in blocks[1:]:
        model = ingest_block(model, block)
        history.append(model.var.Phi)
    return model, blocks, history, time.perf_counter() - start


def partition(rng, total, n_blocks, equal):
    if equal:
        edges = np.linspace(0, total, n_blocks + 1).round().astype(int)
    else:
        cuts = np.sort(rng.choice(np.arange(3, total - 3), n_blocks - 1, replace=False))
        edges = np.concatenate([[0], cuts, [total]])
    return list(zip(edges[:-1], edges[1:]))


def test_criterion_01_online_moments_equal_batch(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    s = tukey_h_forward(rng.standard_normal((20_000, 2, 10)), 0.8, 0.1)
    gamma, kappa = estimate_moments(s, axis=0)
    worst = 0.0
    for n_blocks in (2, 9, 50):
        for equal in (True, False):
            state = None
            for a, b in partition(rng, s.shape[0], n_blocks, equal):
                block = TukeyMomentState.from_series(s[a:b], axis=0)
                state = block if state is None else update_moments_online(
                    state, block.gamma, block.kappa, block.count)
            worst = max(worst, np.max(np.abs(state.gamma / gamma - 1)),
                        np.max(np.abs(state.kappa / kappa - 1)))
    elapsed = time.perf_counter() - start
    criterion(1, worst <= 1e-12 and elapsed < 5,
              f"max relative deviation {worst:.2e} (limit 1e-12), {elapsed:.2f}s (limit 5s)")


def test_criterion_02_online_var_equals_pooled(criterion, truth):
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    lengths = [120, 80, 150, 60, 200, 90, 110, 70, 130]
    series = simulate_var(truth.Phi, truth.K, truth.P, sum(lengths), rng, n_series=5)
    edges = np.cumsum([0] + lengths)
    blocks = [series[:, a:b] for a, b in zip(edges[:-1], edges[1:])]
    state = VarState.from_fit(fit_block(blocks[0], 2), 2)
    for block in blocks[1:]:
        state = update_var_online(state, fit_block(block, 2))
    pooled = fit_pooled(blocks, 2)
    d_phi, d_k = rfd(state.Phi, pooled.Phi), rfd(state.K, pooled.K)
    elapsed = time.perf_counter() - start
    criterion(2, max(d_phi, d_k) <= 1e-8 and elapsed < 30,
              f"RFD(Phi) {d_phi:.2e}, RFD(K) {d_k:.2e} (limit 1e-8), A=10 P=2 R=5 B=9, "
              f"{elapsed:.2f}s (limit 30s)")


def test_criterion_03_polar_cap_spectrum(criterion):
    start = time.perf_counter()
    Q = 18
    grid = RegionGrid.global_grid(2.0)
    grid = grid.with_mask(np.broadcast_to((grid.latitudes >= 30.0)[:, None], grid.shape))
    lam, _ = solve_concentration(build_concentration_matrix(grid, Q))
    basis = slepian_basis(grid, Q, A=Q * Q)
    area = (1 - np.cos(np.deg2rad(60.0))) / 2
    in_range = lam.min() >= -1e-6 and lam.max() <= 1 + 1e-6
    shannon_dev = abs(lam.sum() / (area * Q * Q) - 1)
    ortho = np.abs(basis.G.T @ basis.G - np.eye(Q * Q)).max()
    region = np.abs(region_inner_products(basis, grid) - np.diag(basis.eigenvalues)).max()
    elapsed = time.perf_counter() - start
    ok = in_range and shannon_dev < 0.02 and ortho < 1e-10 and region < 1e-3 and elapsed < 60
    criterion(3, ok,
              f"lambda in [{lam.min():.2e}, {lam.max():.10f}], sum within {shannon_dev:.2%} of f Q^2, "
              f"|G'G - I| {ortho:.1e}, region residual {region:.1e}, {elapsed:.1f}s (limit 60s)")


def test_criterion_04_shannon_spot_check(criterion):
    N = shannon_number(0.00586, 181)
    criterion(4, abs(N - 192) <= 1, f"N = {N:.2f} (target 192 +/- 1)")


def test_criterion_05_tukey_h_suite(criterion):
    start = time.perf_counter()
    u = np.linspace(-6, 6, 1201)
    worst = 0.0
    for h in (0.0, 0.05, 0.1, 0.2, 0.24):
        for omega in (0.1, 1.0, 10.0):
            worst = max(worst, np.abs(tukey_h_inverse(tukey_h_forward(u, omega, h), omega, h) - u).max())
    rng = np.random.default_rng(105)
    s = tukey_h_forward(rng.standard_normal(10**6), 1.0, 0.1)
    _, kappa = estimate_moments(s)
    m2, m4, m6, m8 = (np.mean(s**k) for k in (2, 4, 6, 8))
    grad = np.array([-2 * m4 / m2**3, 1 / m2**2])
    cov = np.array([[m4 - m2**2, m6 - m2 * m4], [m6 - m2 * m4, m8 - m4**2]]) / s.size
    se = np.sqrt(grad @ cov @ grad)
    z = abs(kappa - 5.5085) / se
    _, h_null, _ = moments_to_params(1.0, 3.0)
    elapsed = time.perf_counter() - start
    criterion(5, worst <= 1e-9 and z < 4 and h_null == 0.0 and elapsed < 30,
              f"round trip {worst:.1e} (limit 1e-9), kurtosis {kappa:.4f} is {z:.2f} SE from 5.5085, "
              f"h at kurtosis 3 = {h_null}, {elapsed:.1f}s (limit 30s)")


def test_criterion_06_end_to_end_recovery(criterion, long_run, truth):
    model, _, history, elapsed = long_run
    _, h = model.tukey_params()
    h_med = float(np.median(h))
    d_truth = rfd(model.var.Phi, truth.Phi)
    trace = [rfd(phi, history[-1]) for phi in history[:-1]]
    monotone = all(b <= 1.1 * a for a, b in zip(trace, trace[1:]))
    ok = abs(h_med - 0.1) <= 0.03 and d_truth < 0.1 and monotone and elapsed < 300
    criterion(6, ok,
              f"median h {h_med:.4f} (truth 0.1), RFD(Phi, truth) {d_truth:.3f} (limit 0.1), "
              f"trace {trace[0]:.4f} -> {trace[-1]:.4f} non-increasing: {monotone}, {elapsed:.0f}s (limit 300s)")


def test_criterion_07_short_blocks(criterion, basis, truth, long_run):
    start = time.perf_counter()
    lengths = SCENARIOS["short"]
    updates = 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        stream = generate_synthetic(truth, LONG_R, lengths, seed=STREAM_SEED)
        model = fit_initial(next(stream), basis)
        for block in stream:
            model = ingest_block(model, block)
            updates += 1
    elapsed = time.perf_counter() - start
    long_model = long_run[0]
    d_phi = rfd(model.var.Phi, long_model.var.Phi)
    d_k = rfd(model.var.K, long_model.var.K)
    ok = updates == 50 and max(d_phi, d_k) <= 0.15 and elapsed < 300
    criterion(7, ok,
              f"{updates}/50 updates, RFD(Phi) {d_phi:.3f}, RFD(K) {d_k:.3f} vs long run (limit 0.15), "
              f"{elapsed:.0f}s (limit 300s)")


def test_criterion_08_self_emulation(criterion, long_run):
    start = time.perf_counter()
    model, blocks, _, _ = long_run
    reference = np.concatenate([b.y for b in blocks], axis=2)
    em = emulate(model, LONG_R, seed=5)
    parts = []
    ok = True
    for v, name in enumerate("UV"):
        rep = compute_indices(em.y[v], reference[v])
        uq = float(np.median(rep.uq))
        rq = float(np.median(np.abs(rep.rq) / rep.reference_sd))
        wdt = float(np.median(rep.wdt / rep.reference_sd))
        ok &= 0.9 <= uq <= 1.1 and rq < 0.05 and wdt < 0.10
        parts.append(f"{name}: I_uq {uq:.3f}, |I_rq|/sd {rq:.1%}, I_wdt/sd {wdt:.1%}")
    elapsed = time.perf_counter() - start
    criterion(8, ok and elapsed < 300, "; ".join(parts) + f"; {elapsed:.0f}s (limit 300s)")


def test_criterion_09_persistence_determinism(criterion, basis, region, truth, tmp_path):
    blocks = list(generate_synthetic(truth, 5, [300, 100, 100, 100, 100], seed=9))
    memory = fit_initial(blocks[0], basis, grid=region)
    for block in blocks[1:3]:
        memory = ingest_block(memory, block)
    containers.save_state(tmp_path / "state", memory)
    resumed = containers.load_state(tmp_path / "state")
    for block in blocks[3:]:
        memory = ingest_block(memory, block)
        resumed = ingest_block(resumed, block)
    pairs = [(memory.mean, resumed.mean), (memory.sigma, resumed.sigma),
             (memory.tukey.gamma, resumed.tukey.gamma), (memory.tukey.kappa, resumed.tukey.kappa),
             (memory.var.Phi, resumed.var.Phi), (memory.var.K, resumed.var.K),
             (memory.var.X, resumed.var.X)]
    identical = all(a.tobytes() == b.tobytes() for a, b in pairs)
    identical &= memory.block_lengths == resumed.block_lengths and memory.var.n_eff == resumed.var.n_eff
    criterion(9, identical, f"resumed state bit-identical to uninterrupted run: {identical}")


def test_criterion_10_metric_axioms(criterion):
    rng = np.random.default_rng(110)
    violations = 0
    for _ in range(200):
        x, y, z = (rng.standard_normal(rng.integers(1, 40)) * rng.uniform(0.1, 5) for _ in range(3))
        dxy, dyx = wasserstein_1d(x, y), wasserstein_1d(y, x)
        violations += dxy != pytest.approx(dyx, rel=1e-12, abs=1e-14)
        violations += wasserstein_1d(x, x) != 0.0
        violations += dxy > wasserstein_1d(x, z) + wasserstein_1d(z, y) + 1e-12
    series = rng.standard_normal((10, 50, 3))
    homog = max(np.abs(central_region_area(c * series) - abs(c) * central_region_area(series)).max()
                / central_region_area(series).max() for c in (-3.0, 0.5, 7.0))
    T = 10_000
    noise = rng.standard_normal((T, 20))
    pac = max(np.nanmax(np.abs(b)) for p in (1, 2) for b in pac_matrix(noise, p).values())
    ok = violations == 0 and homog < 1e-12 and pac < 4 / np.sqrt(T)
    criterion(10, ok,
              f"W1 axiom violations {violations}/600, CRA homogeneity error {homog:.1e}, "
              f"PAC max |entry| {pac:.4f} (limit {4 / np.sqrt(T):.2f})")
