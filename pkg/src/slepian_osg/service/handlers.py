"""Operations behind the HTTP endpoints and the CLI subcommands.

Each handler takes a request model, reads and writes containers on disk and
returns a response model.  Errors propagate as :class:`OsgError` subclasses.
"""
from __future__ import annotations

import csv
import shutil
from pathlib import Path

import numpy as np

from .. import containers
from ..errors import ConfigurationError, SequencingError
from ..metrics import compute_indices
from ..pipeline import (
    SCENARIOS,
    VARIABLES,
    EnsembleBlock,
    emulate,
    fit_initial,
    generate_synthetic,
    ingest_block,
    make_truth,
    rfd,
    synthetic_region,
)
from ..slepian import slepian_basis
from ..var import lag_matrices, stability_check
from . import schemas

TRACE_FILE = "trace.csv"
TRACE_COLUMNS = ["block", "RFD_Phi1", "RFD_Phi2", "RFD_K"]


def build_basis(req: schemas.BasisBuildRequest) -> schemas.BasisBuildResponse:
    grid = containers.read_mask(req.mask)
    basis = slepian_basis(grid, req.Q, threshold=req.threshold, A=req.A, quadrature=req.quadrature)
    containers.write_basis(req.out, basis, grid)
    return schemas.BasisBuildResponse(
        path=str(req.out), Q=basis.Q, A=basis.A, shannon=basis.shannon,
        n_cells=basis.n_masked, fingerprint=basis.fingerprint,
        eigenvalues=basis.eigenvalues.tolist(),
    )


def _reference_matrices(path):
    manifest = containers.read_manifest(path)
    kind = manifest.get("kind")
    if kind == "state":
        model = containers.load_state(path)
        return model.var.Phi, model.var.K, model.P
    if kind == "truth":
        truth, _ = containers.load_truth(path)
        return truth.Phi, truth.K, truth.P
    raise ConfigurationError(f"{path}: trace reference must be a state or truth container, not {kind!r}")


def _trace_row(model, reference):
    Phi_ref, K_ref, P_ref = reference
    if Phi_ref.shape != model.var.Phi.shape or P_ref != model.P:
        raise ConfigurationError("trace reference has different dimensions or lag order")
    est = lag_matrices(model.var.Phi, model.P)
    ref = lag_matrices(Phi_ref, P_ref)
    return schemas.TraceRow(
        block=model.n_blocks - 1,
        RFD_Phi1=rfd(est[0], ref[0]),
        RFD_Phi2=rfd(est[1], ref[1]) if model.P > 1 else None,
        RFD_K=rfd(model.var.K, K_ref),
    )


def _num(x):
    # shortest text that round-trips the double
    return repr(float(x))


def _append_trace(state_dir, rows):
    path = Path(state_dir) / TRACE_FILE
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([row.block, _num(row.RFD_Phi1),
                             "" if row.RFD_Phi2 is None else _num(row.RFD_Phi2), _num(row.RFD_K)])


def _fit_response(state, model, trace=()):
    _, h = model.tukey_params()
    return schemas.FitResponse(
        state=str(state), T=model.T, n_blocks=model.n_blocks, A=model.A, P=model.P,
        spectral_radius=stability_check(model.var.Phi, model.P),
        h_median=np.median(h, axis=1).tolist(),
        parameter_count=model.parameter_count(), trace=list(trace),
    )


def fit_init(req: schemas.FitInitRequest) -> schemas.FitResponse:
    basis, grid = containers.read_basis(req.basis)
    block = containers.read_block(req.block, fingerprint=basis.fingerprint)
    if block.time_offset != 0:
        raise SequencingError(f"initial block must start at t=0, found t={block.time_offset}")
    with containers.writer_lock(req.state):
        model = fit_initial(block, basis, req.P, retransform=req.retransform, tgh=req.tgh,
                            ridge=req.ridge, grid=grid)
        trace_file = Path(req.state) / TRACE_FILE
        if trace_file.exists():
            trace_file.unlink()
        containers.save_state(req.state, model)
    return _fit_response(req.state, model)


def fit_update(req: schemas.FitUpdateRequest) -> schemas.FitResponse:
    reference = _reference_matrices(req.trace_reference) if req.trace_reference else None
    rows = []
    with containers.writer_lock(req.state):
        model = containers.load_state(req.state)
        for path in req.blocks:
            block = containers.read_block(path, fingerprint=model.fingerprint)
            model = ingest_block(model, block)
            containers.save_state(req.state, model)
            if reference is not None:
                row = _trace_row(model, reference)
                _append_trace(req.state, [row])
                rows.append(row)
    return _fit_response(req.state, model, rows)


def run_emulation(req: schemas.EmulateRequest) -> schemas.EmulateResponse:
    model = containers.load_state(req.state)
    block = emulate(model, req.members, seed=req.seed, start=req.start, length=req.length,
                    residuals=req.residuals)
    containers.write_block(req.out, block)
    return schemas.EmulateResponse(path=str(req.out), shape=list(block.y.shape),
                                   time_offset=block.time_offset)


def _concatenate(blocks):
    blocks = sorted(blocks, key=lambda b: b.time_offset)
    offset = blocks[0].time_offset
    for b in blocks:
        if b.time_offset != offset:
            raise SequencingError(f"reference blocks are not contiguous at t={offset}")
        offset += b.length
    return EnsembleBlock(np.concatenate([b.y for b in blocks], axis=2),
                         blocks[0].time_offset, blocks[0].fingerprint)


def validate(req: schemas.ValidateRequest) -> schemas.ValidateResponse:
    basis, grid = containers.read_basis(req.basis)
    ref = _concatenate([containers.read_block(p, fingerprint=basis.fingerprint) for p in req.reference])
    em = containers.read_block(req.emulated, fingerprint=basis.fingerprint)
    lo = em.time_offset - ref.time_offset
    if lo < 0 or lo + em.length > ref.length:
        raise ConfigurationError(
            f"emulated range [{em.time_offset}, {em.time_offset + em.length}) is not covered by the "
            f"reference range [{ref.time_offset}, {ref.time_offset + ref.length})")
    reports = {}
    for v, name in enumerate(VARIABLES):
        reports[name] = compute_indices(em.y[v], ref.y[v, :, lo:lo + em.length])
    containers.save_validation(req.out, reports, grid, em.time_offset)
    return schemas.ValidateResponse(path=str(req.out),
                                    summary={k: r.summary() for k, r in reports.items()})


def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    lengths = SCENARIOS[req.scenario]
    if req.blocks is not None:
        lengths = lengths[:req.blocks]
    out = Path(req.out)
    grid = synthetic_region()
    basis = slepian_basis(grid, req.Q, A=req.A)
    truth = make_truth(basis, P=req.P, rho=req.rho, h=req.h, seed=req.seed)
    containers.write_mask(out / "mask", grid)
    containers.write_basis(out / "basis", basis, grid)
    containers.save_truth(out / "truth", truth, grid)
    paths = []
    for i, block in enumerate(generate_synthetic(truth, req.members, lengths, seed=req.seed)):
        path = out / "blocks" / f"block_{i:03d}"
        containers.write_block(path, block)
        paths.append(str(path))
    return schemas.SynthResponse(mask=str(out / "mask"), basis=str(out / "basis"),
                                 truth=str(out / "truth"), blocks=paths, block_lengths=lengths)


def report(req: schemas.ReportRequest) -> schemas.ReportResponse:
    if req.validation is None and req.state is None:
        raise ConfigurationError("report needs a validation container, a state directory, or both")
    out = Path(req.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if req.validation is not None:
        arrays, attrs = containers.load_validation(req.validation)
        names = attrs["variables"]
        cells = out / "cells.csv"
        with cells.open("w", newline="") as fh:
            writer = csv.writer(fh)
            cols = [f"{idx}_{v}" for v in names for idx in ("uq", "wdt", "rq", "reference_sd")]
            writer.writerow(["cell_id", "lat", "lon"] + cols)
            for c in range(arrays["latitude"].size):
                writer.writerow([c, _num(arrays["latitude"][c]), _num(arrays["longitude"][c])]
                                + [_num(arrays[col][c]) for col in cols])
        times = out / "times.csv"
        with times.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"wds_{v}" for v in names])
            n = arrays[f"wds_{names[0]}"].size
            for t in range(n):
                writer.writerow([attrs["time_offset"] + t] + [_num(arrays[f"wds_{v}"][t]) for v in names])
        files += [str(cells), str(times)]
    if req.state is not None:
        src = Path(req.state) / TRACE_FILE
        if not src.exists():
            raise ConfigurationError(f"{req.state} has no {TRACE_FILE}; run fit update with --trace-reference")
        dst = out / TRACE_FILE
        shutil.copyfile(src, dst)
        files.append(str(dst))
    return schemas.ReportResponse(files=files)


HANDLERS = {
    "basis.build": (schemas.BasisBuildRequest, build_basis),
    "fit.init": (schemas.FitInitRequest, fit_init),
    "fit.update": (schemas.FitUpdateRequest, fit_update),
    "emulate": (schemas.EmulateRequest, run_emulation),
    "validate": (schemas.ValidateRequest, validate),
    "synth": (schemas.SynthRequest, synth),
    "report": (schemas.ReportRequest, report),
}
