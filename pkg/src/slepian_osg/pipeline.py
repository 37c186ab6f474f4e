"""Fitting, streaming updates and emulation for the bivariate ensemble generator.

Data blocks hold two variables (``U`` and ``V``) for ``R`` ensemble members
on the cells inside a region.  Fitting removes the ensemble mean, projects
the anomalies on a Slepian basis, Gaussianizes every coefficient series with
a Tukey h transform and fits a VAR(P) to the stacked transformed series.
New blocks update all of these without revisiting earlier data; only the
mean and residual standard deviation fields grow with time.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DomainError, InsufficientDataError, RangeError, SequencingError
from .harmonics import RegionGrid
from .slepian import SlepianBasis, analyze
from .tukey import (
    H_CAP,
    TukeyGState,
    TukeyMomentState,
    estimate_moments,
    moments_to_params,
    tukey_g_forward,
    tukey_g_inverse,
    tukey_g_online_update,
    tukey_h_forward,
    tukey_h_inverse,
    update_moments_online,
)
from .var import (
    VarState,
    fit_block,
    lag_matrices,
    simulate_var,
    split_coefficients,
    stability_check,
    stack_coefficients,
    stack_lag_matrices,
    update_var_online,
)

N_VARIABLES = 2
VARIABLES = ("U", "V")

#: block lengths of the two reference streaming scenarios (3-hourly steps)
SCENARIOS = {
    "long": [365 * 8] * 10,
    "short": [31 * 8] + [7 * 8] * 50,
}


@dataclass(eq=False)
class EnsembleBlock:
    """Ensemble fields for one contiguous time block.

    ``y`` has shape ``(2, R, tau, n_cells)`` with the variable axis ordered
    ``(U, V)``; ``time_offset`` is the index of the block's first time point
    in the full record.
    """

    y: np.ndarray
    time_offset: int = 0
    fingerprint: str = ""

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 4 or y.shape[0] != N_VARIABLES:
            raise ConfigurationError(f"block must have shape (2, R, tau, cells), got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ConfigurationError("block contains non-finite values")
        if self.time_offset < 0:
            raise SequencingError("time offset must be non-negative")
        self.y = y

    @property
    def R(self):
        return self.y.shape[1]

    @property
    def length(self):
        return self.y.shape[2]

    @property
    def n_cells(self):
        return self.y.shape[3]


@dataclass(eq=False)
class OsgModel:
    """Everything needed to emulate, and to keep learning from new blocks.

    ``mean`` and ``sigma`` are ``(2, T, n_cells)``; ``tukey`` holds moment
    arrays of shape ``(2, A)``; ``block_lengths`` records the ingested blocks
    in order.  With ``tgh`` set, ``g_state`` carries per-coefficient
    skewness estimates and slopes, each ``(2, A)``.  ``grid`` is optional and
    only needed to persist the basis alongside the model.
    """

    basis: SlepianBasis
    P: int
    R: int
    mean: np.ndarray
    sigma: np.ndarray
    tukey: TukeyMomentState
    var: VarState
    block_lengths: list = field(default_factory=list)
    retransform: bool = False
    tgh: bool = False
    ridge: float = 0.0
    g_state: dict | None = None
    grid: RegionGrid | None = None

    @property
    def A(self):
        return self.basis.A

    @property
    def T(self):
        return int(sum(self.block_lengths))

    @property
    def n_blocks(self):
        return len(self.block_lengths)

    @property
    def fingerprint(self):
        return self.basis.fingerprint

    def tukey_params(self):
        """Cumulative ``(omega, h)``, each ``(2, A)``."""
        omega, h, _ = self.tukey.params()
        return omega, h

    def parameter_count(self):
        return parameter_count(self.A, self.P, self.basis.n_masked, self.T)


def parameter_count(A, P, n_cells, T):
    """Stored numbers for a fully fitted model: ``4 T n + 4 A + 4 (P + 1) A^2``."""
    return 4 * T * n_cells + 4 * A + 4 * (P + 1) * A * A


def raw_data_size(R, T, n_cells):
    return N_VARIABLES * R * T * n_cells


def min_initial_length(A, R, P):
    """Shortest initial block for which the lag Gram matrix can be invertible."""
    return math.ceil((2 * A + R) * P / R)


def rfd(a, b):
    """Relative Frobenius distance ``||a - b||_F / ||b||_F``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch {a.shape} vs {b.shape}")
    ref = np.linalg.norm(b)
    if ref == 0:
        raise DomainError("reference matrix has zero norm")
    return float(np.linalg.norm(a - b) / ref)


# --- per-block statistics ----------------------------------------------------

def _check_block(block, basis, P):
    if block.fingerprint and block.fingerprint != basis.fingerprint:
        raise ConfigurationError(
            f"block grid fingerprint {block.fingerprint} does not match basis {basis.fingerprint}")
    if block.n_cells != basis.n_masked:
        raise ConfigurationError(
            f"block has {block.n_cells} cells but the region has {basis.n_masked}")
    if block.R < 2:
        raise InsufficientDataError("at least two ensemble members are needed")
    if block.length < P + 1:
        raise InsufficientDataError(f"block length {block.length} is shorter than P + 1 = {P + 1}")


def _decompose(block, basis):
    mean = block.y.mean(axis=1)
    z = block.y - mean[:, None]
    s, sigma2 = analyze(z, basis, ensemble_axis=1)
    return mean, np.sqrt(sigma2), s


def _h_transform(s, omega, h):
    return tukey_h_inverse(s, omega[:, None, None, :], h[:, None, None, :])


def _g_inverse_clamped(y, g):
    out = np.empty_like(y)
    clamped = 0
    for v in range(y.shape[0]):
        for a in range(y.shape[-1]):
            col = y[v, ..., a]
            gv = g[v, a]
            if gv != 0:
                edge = -1.0 / gv
                bad = (1.0 + gv * col) <= 1e-12
                if bad.any():
                    clamped += int(bad.sum())
                    col = np.where(bad, edge * (1.0 - 1e-12), col)
            out[v, ..., a] = tukey_g_inverse(col, gv)
    if clamped:
        warnings.warn(f"{clamped} values clamped into the skewness log domain",
                      RuntimeWarning, stacklevel=3)
    return out


def _g_update(g_state, s, omega, h):
    """One skewness sweep: update ``g`` from h-inverted coefficients."""
    y = _h_transform(s, omega, h)
    A = s.shape[-1]
    g_new = np.empty((N_VARIABLES, A))
    slope_new = np.empty((N_VARIABLES, A))
    g_block = np.empty((N_VARIABLES, A))
    for v in range(N_VARIABLES):
        for a in range(A):
            prev = TukeyGState(0.0, 0.0, 0)
            if g_state is not None:
                prev = TukeyGState(float(g_state["g"][v, a]), float(g_state["slope"][v, a]),
                                   int(g_state["blocks"]))
            st, gb = tukey_g_online_update(prev, y[v, ..., a].ravel())
            g_new[v, a], slope_new[v, a], g_block[v, a] = st.g, st.slope, gb
    blocks = 1 if g_state is None else int(g_state["blocks"]) + 1
    return {"g": g_new, "slope": slope_new, "blocks": blocks}, g_block


def _transform(s, omega, h, g=None):
    x = _h_transform(s, omega, h)
    if g is not None:
        x = _g_inverse_clamped(x, g)
    return stack_coefficients(x[0], x[1])


# --- fitting -----------------------------------------------------------------

def fit_initial(block, basis, P=2, *, retransform=False, tgh=False, ridge=0.0, grid=None):
    """Fit the generator to an initial block.

    Raises
    ------
    ConfigurationError
        When the block is shorter than ``ceil((2A + R) P / R)``.
    """
    _check_block(block, basis, P)
    A, R = basis.A, block.R
    bound = min_initial_length(A, R, P)
    if block.length < bound:
        raise ConfigurationError(
            f"initial block has {block.length} time points; at least ceil((2A+R)P/R) = {bound} "
            f"are needed for A={A}, R={R}, P={P}")
    mean, sigma, s = _decompose(block, basis)
    gamma, kappa = estimate_moments(s, axis=(1, 2))
    tukey = TukeyMomentState(gamma, kappa, R * block.length)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        omega, h, _ = moments_to_params(gamma, kappa)
    g_state, g_use = None, None
    if tgh:
        g_state, g_use = _g_update(None, s, omega, h)
    series = _transform(s, omega, h, g_use)
    var = VarState.from_fit(fit_block(series, P, ridge), P)
    if grid is not None and grid.fingerprint != basis.fingerprint:
        raise ConfigurationError("grid does not match the basis fingerprint")
    return OsgModel(basis, P, R, mean, sigma, tukey, var, [block.length],
                    retransform, tgh, ridge, g_state, grid)


def ingest_block(model, block):
    """Update ``model`` with the next block and return the new model.

    The input model is left untouched.  Blocks must arrive in order and
    without gaps: ``block.time_offset`` has to equal ``model.T``.
    """
    if not model.block_lengths:
        raise SequencingError("model has not been initialized with a first block")
    if block.time_offset != model.T:
        kind = "overlaps" if block.time_offset < model.T else "leaves a gap after"
        raise SequencingError(
            f"block starting at t={block.time_offset} {kind} the fitted range ending at t={model.T}")
    if block.R != model.R:
        raise ConfigurationError(f"block has {block.R} members, model was fitted with {model.R}")
    _check_block(block, model.basis, model.P)
    mean, sigma, s = _decompose(block, model.basis)
    gamma_b, kappa_b = estimate_moments(s, axis=(1, 2))
    tukey = update_moments_online(model.tukey, gamma_b, kappa_b, block.R * block.length)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        omega_b, h_b, _ = moments_to_params(gamma_b, kappa_b)
        omega_c, h_c, _ = moments_to_params(tukey.gamma, tukey.kappa)
    omega_prev, h_prev = model.tukey_params()
    g_state, g_use = model.g_state, None
    if model.tgh:
        g_state, g_block = _g_update(model.g_state, s, omega_prev, h_prev)
        g_use = g_state["g"] if model.retransform else g_block
    if model.retransform:
        series = _transform(s, omega_c, h_c, g_use)
    else:
        series = _transform(s, omega_b, h_b, g_use)
    var = update_var_online(model.var, fit_block(series, model.P, model.ridge), model.ridge)
    return replace(
        model,
        mean=np.concatenate([model.mean, mean], axis=1),
        sigma=np.concatenate([model.sigma, sigma], axis=1),
        tukey=tukey,
        var=var,
        block_lengths=model.block_lengths + [block.length],
        g_state=g_state,
    )


def fit_stream(blocks, basis, P=2, **options):
    """Fit on the first block and ingest the rest; returns the final model."""
    it = iter(blocks)
    model = fit_initial(next(it), basis, P, **options)
    for block in it:
        model = ingest_block(model, block)
    return model


# --- emulation ---------------------------------------------------------------

def coefficients_from_gaussian(series, omega, h, g=None):
    """Map simulated Gaussian series ``(n, tau, 2A)`` to coefficients ``(2, n, tau, A)``."""
    u, v = split_coefficients(series)
    x = np.stack([u, v])
    if g is not None:
        x = tukey_g_forward(x, g[:, None, None, :])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return tukey_h_forward(x, omega[:, None, None, :], h[:, None, None, :])


def emulate(model, n_members, seed=None, start=0, length=None, residuals=True):
    """Draw ``n_members`` emulated ensemble members over ``[start, start + length)``.

    The VAR is simulated first, then the residual noise, both from one
    generator seeded with ``seed``; equal seeds give identical output.
    """
    length = model.T - start if length is None else length
    if start < 0 or length < 0 or start + length > model.T:
        raise RangeError(
            f"requested range [{start}, {start + length}) lies outside the fitted range [0, {model.T})")
    n = model.basis.n_masked
    if n_members < 0:
        raise ConfigurationError("number of emulated members must be non-negative")
    if n_members == 0 or length == 0:
        return EnsembleBlock(np.zeros((N_VARIABLES, n_members, length, n)), start, model.fingerprint)
    rng = np.random.default_rng(seed)
    series = simulate_var(model.var.Phi, model.var.K, model.P, length, rng, n_series=n_members)
    omega, h = model.tukey_params()
    g = model.g_state["g"] if model.tgh else None
    coef = coefficients_from_gaussian(series, omega, h, g)
    y = coef @ model.basis.samples.T
    y += model.mean[:, None, start:start + length]
    if residuals:
        noise = rng.standard_normal((length, N_VARIABLES, n_members, n))
        y += model.sigma[:, None, start:start + length] * np.transpose(noise, (1, 2, 0, 3))
    return EnsembleBlock(y, start, model.fingerprint)


# --- synthetic truth ---------------------------------------------------------

@dataclass(eq=False)
class SyntheticTruth:
    """Known generator parameters for recovery experiments.

    The Gaussian VAR has unit marginal variances, so ``omega`` and ``h``
    are the exact Tukey parameters of every coefficient series.  The mean
    field is ``base + amplitude * sin(2 pi t / period + phase)`` per cell.
    """

    basis: SlepianBasis
    omega: np.ndarray
    h: np.ndarray
    Phi: np.ndarray
    K: np.ndarray
    P: int
    sigma: np.ndarray
    base: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    period: float = 8.0
    burn_in: int = 200

    def __post_init__(self):
        A = self.basis.A
        d = 2 * A
        if self.omega.shape != (2, A) or self.h.shape != (2, A):
            raise ConfigurationError("omega and h must have shape (2, A)")
        if np.any(self.omega <= 0):
            raise ConfigurationError("omega must be positive")
        if np.any(self.h < 0) or np.any(self.h > H_CAP):
            raise ConfigurationError(f"h must lie in [0, {H_CAP}]")
        if self.Phi.shape != (d * self.P, d) or self.K.shape != (d, d):
            raise ConfigurationError("Phi/K dimensions do not match (A, P)")
        if not np.allclose(self.K, self.K.T):
            raise ConfigurationError("K must be symmetric")
        lam = np.linalg.eigvalsh(self.K)
        if lam.min() < -1e-8 * max(np.abs(lam).max(), 1.0):
            raise ConfigurationError("K must be positive semidefinite")
        if np.any(self.sigma < 0):
            raise ConfigurationError("sigma must be non-negative")

    def mean_field(self, t0, length):
        t = np.arange(t0, t0 + length, dtype=np.float64)
        wave = np.sin(2 * np.pi * t[None, :, None] / self.period + self.phase[:, None, :])
        return self.base[:, None, :] + self.amplitude[:, None, :] * wave

    @property
    def gamma(self):
        """Second moment of each coefficient series, ``omega^2 (1 - 2h)^{-3/2}``."""
        return self.omega**2 * (1.0 - 2.0 * self.h) ** -1.5


def synthetic_region(spacing=2.0, radius=10.0, center=(25.0, 45.0)):
    """Regional grid whose mask is a spherical cap of ``radius`` degrees."""
    lat0, lon0 = center
    half = radius + spacing
    lat = np.arange(lat0 - half + spacing / 2, lat0 + half, spacing)
    lon = np.arange(lon0 - half + spacing / 2, lon0 + half, spacing)
    la, lo = np.meshgrid(np.deg2rad(lat), np.deg2rad(lon), indexing="ij")
    cosd = (np.sin(la) * np.sin(np.deg2rad(lat0))
            + np.cos(la) * np.cos(np.deg2rad(lat0)) * np.cos(lo - np.deg2rad(lon0)))
    mask = np.degrees(np.arccos(np.clip(cosd, -1, 1))) <= radius
    return RegionGrid(lat, lon, mask)


def _scale_to_radius(mats, P, rho):
    lo, hi = 0.0, 1.0
    while stability_check(stack_lag_matrices([hi * m for m in mats]), P) < rho:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if stability_check(stack_lag_matrices([mid * m for m in mats]), P) < rho:
            lo = mid
        else:
            hi = mid
    return [0.5 * (lo + hi) * m for m in mats]


def stationary_covariance(Phi, K, P):
    """Stationary covariance of one time slice of a stable VAR(P)."""
    d = K.shape[0]
    F = np.zeros((d * P, d * P))
    F[:d] = np.hstack(lag_matrices(Phi, P))
    if P > 1:
        F[d:, :-d] = np.eye(d * (P - 1))
    Qm = np.zeros((d * P, d * P))
    Qm[:d, :d] = K
    return scipy.linalg.solve_discrete_lyapunov(F, Qm)[:d, :d]


def make_truth(basis, P=2, rho=0.8, h=0.1, sigma=0.05, uv_correlation=0.3, seed=0):
    """Random but reproducible truth with companion spectral radius ``rho``."""
    rng = np.random.default_rng(seed)
    A = basis.A
    d = 2 * A
    mats = []
    for p in range(P):
        M = np.diag(rng.uniform(0.3, 0.9, d) / (p + 1))
        M += 0.05 * rng.standard_normal((d, d)) / (p + 1)
        mats.append(M)
    mats = _scale_to_radius(mats, P, rho)
    K = np.eye(d)
    K[:A, A:] = K[A:, :A] = uv_correlation * np.eye(A)
    cov = stationary_covariance(stack_lag_matrices(mats), K, P)
    D = 1.0 / np.sqrt(np.diag(cov))
    mats = [D[:, None] * M / D[None, :] for M in mats]
    K = D[:, None] * K * D[None, :]
    decay = 0.85 ** np.arange(A)
    omega = np.vstack([0.6 * decay, 0.5 * decay])
    n = basis.n_masked
    return SyntheticTruth(
        basis=basis,
        omega=omega,
        h=np.full((2, A), float(h)),
        Phi=stack_lag_matrices(mats),
        K=0.5 * (K + K.T),
        P=P,
        sigma=np.full((2, n), float(sigma)),
        base=np.vstack([rng.uniform(-2, 2, n), rng.uniform(-1, 3, n)]),
        amplitude=np.vstack([rng.uniform(0.5, 1.5, n), rng.uniform(0.2, 1.0, n)]),
        phase=rng.uniform(0, 2 * np.pi, (2, n)),
    )


def generate_synthetic(truth, R, lengths, seed=0):
    """Yield consecutive :class:`EnsembleBlock` objects drawn from ``truth``.

    The stream is continuous across blocks and its content depends only on
    ``(truth, R, seed)`` and the total length, not on how it is cut into
    blocks: every random draw is made in time-major order.
    """
    ss = np.random.SeedSequence(seed)
    rng_var, rng_noise = (np.random.default_rng(s) for s in ss.spawn(2))
    P = truth.P
    warm = simulate_var(truth.Phi, truth.K, P, max(truth.burn_in, P), rng_var, n_series=R)
    lags = warm[:, -P:]
    n = truth.basis.n_masked
    offset = 0
    for length in lengths:
        series = simulate_var(truth.Phi, truth.K, P, length, rng_var, n_series=R, initial=lags)
        lags = series[:, -P:]
        coef = coefficients_from_gaussian(series, truth.omega, truth.h)
        y = coef @ truth.basis.samples.T
        y += truth.mean_field(offset, length)[:, None]
        noise = rng_noise.standard_normal((length, N_VARIABLES, R, n))
        y += truth.sigma[:, None, None, :] * np.transpose(noise, (1, 2, 0, 3))
        yield EnsembleBlock(y, offset, truth.basis.fingerprint)
        offset += length
