"""Directory containers of raw float64 arrays described by a JSON manifest.

A container is a directory holding ``manifest.json`` and one payload file
per array.  Payloads are little-endian IEEE-754 doubles in row-major order
with no header, so ``bytes = 8 * prod(shape)``.  The manifest records the
format name and version, the container kind, the grid fingerprint and free
attributes.
"""
from __future__ import annotations

import contextlib
import json
import os
from pathlib import Path

import filelock
import numpy as np

from .errors import ConfigurationError, FormatError, MigrationError
from .harmonics import RegionGrid
from .pipeline import EnsembleBlock, OsgModel, SyntheticTruth
from .slepian import SlepianBasis
from .tukey import TukeyMomentState
from .var import VarState

FORMAT = "slepian-osg-arrays"
VERSION = 1
MANIFEST = "manifest.json"
DTYPE = "<f8"
LOCK_NAME = ".lock"
KINDS = ("block", "state", "basis", "mask", "truth", "validation")


def write_container(path, kind, arrays, attrs=None, fingerprint=None):
    """Write ``arrays`` (name -> array) into the directory ``path``."""
    if kind not in KINDS:
        raise ConfigurationError(f"unknown container kind {kind!r}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=DTYPE)
        fname = f"{name}.f64"
        (path / fname).write_bytes(arr.tobytes(order="C"))
        entries[name] = {"shape": list(arr.shape), "dtype": DTYPE, "file": fname}
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "fingerprint": fingerprint,
        "arrays": entries,
        "attrs": attrs or {},
    }
    tmp = path / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    os.replace(tmp, path / MANIFEST)
    return path


def read_manifest(path):
    path = Path(path)
    mpath = path / MANIFEST
    if not mpath.is_file():
        raise FormatError(f"{path} is not a container: {MANIFEST} is missing")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: manifest is not valid JSON ({exc})") from exc
    if manifest.get("format") != FORMAT:
        raise FormatError(f"{mpath}: unknown format {manifest.get('format')!r}")
    if manifest.get("version") != VERSION:
        raise MigrationError(
            f"{mpath}: container version {manifest.get('version')} cannot be read by "
            f"this version ({VERSION}); migrate it first")
    return manifest


def read_container(path, kind=None):
    """Return ``(arrays, manifest)``; ``kind`` is checked when given."""
    path = Path(path)
    manifest = read_manifest(path)
    if kind is not None and manifest.get("kind") != kind:
        raise FormatError(f"{path} holds a {manifest.get('kind')!r} container, expected {kind!r}")
    arrays = {}
    for name, entry in manifest["arrays"].items():
        if entry.get("dtype") != DTYPE:
            raise FormatError(f"{path}/{entry['file']}: unsupported element type {entry.get('dtype')!r}")
        shape = tuple(int(s) for s in entry["shape"])
        expected = 8 * int(np.prod(shape, dtype=np.int64))
        fpath = path / entry["file"]
        if not fpath.is_file():
            raise FormatError(f"{fpath}: payload file is missing")
        actual = fpath.stat().st_size
        if actual != expected:
            raise FormatError(
                f"{fpath}: expected {expected} bytes for shape {list(shape)}, found {actual} "
                f"(payload ends at byte offset {actual}, should end at {expected})")
        arrays[name] = np.fromfile(fpath, dtype=DTYPE).reshape(shape)
    return arrays, manifest


@contextlib.contextmanager
def writer_lock(path, timeout=0.0):
    """Hold the single-writer lock of a state directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = filelock.FileLock(str(path / LOCK_NAME), timeout=timeout)
    try:
        with lock:
            yield path
    except filelock.Timeout as exc:
        raise ConfigurationError(f"{path} is locked by another writer") from exc


# --- grids and masks ---------------------------------------------------------

def write_mask(path, grid):
    return write_container(
        path, "mask",
        {"latitudes": grid.latitudes, "longitudes": grid.longitudes,
         "mask": grid.mask.astype(np.float64)},
        {"dlat": grid.dlat, "dlon": grid.dlon},
        grid.fingerprint,
    )


def _grid_from(arrays, attrs):
    mask = arrays["mask"]
    if not np.all((mask == 0) | (mask == 1)):
        raise FormatError("mask values must be 0 or 1")
    return RegionGrid(arrays["latitudes"], arrays["longitudes"], mask.astype(bool),
                      attrs.get("dlat"), attrs.get("dlon"))


def read_mask(path):
    arrays, manifest = read_container(path, "mask")
    return _grid_from(arrays, manifest["attrs"])


# --- bases -------------------------------------------------------------------

def write_basis(path, basis, grid):
    if basis.fingerprint != grid.fingerprint:
        raise ConfigurationError("basis and grid fingerprints differ")
    return write_container(
        path, "basis",
        {"eigenvalues": basis.eigenvalues, "spectrum": basis.spectrum, "G": basis.G,
         "samples": basis.samples, "weights": basis.weights,
         "latitudes": grid.latitudes, "longitudes": grid.longitudes,
         "mask": grid.mask.astype(np.float64)},
        {"Q": basis.Q, "shannon": basis.shannon, "dlat": grid.dlat, "dlon": grid.dlon},
        basis.fingerprint,
    )


def read_basis(path):
    """Return ``(basis, grid)``."""
    arrays, manifest = read_container(path, "basis")
    attrs = manifest["attrs"]
    grid = _grid_from(arrays, attrs)
    if grid.fingerprint != manifest["fingerprint"]:
        raise FormatError(f"{path}: stored grid does not match fingerprint {manifest['fingerprint']}")
    basis = SlepianBasis(arrays["eigenvalues"], arrays["spectrum"], arrays["G"], arrays["samples"],
                         arrays["weights"], int(attrs["Q"]), float(attrs["shannon"]), grid.fingerprint)
    return basis, grid


# --- blocks ------------------------------------------------------------------

def write_block(path, block):
    return write_container(path, "block", {"y": block.y},
                           {"time_offset": int(block.time_offset)}, block.fingerprint or None)


def read_block(path, fingerprint=None):
    """Read a block; ``fingerprint`` (if given) must match the stored one."""
    arrays, manifest = read_container(path, "block")
    stored = manifest.get("fingerprint") or ""
    if fingerprint is not None and stored != fingerprint:
        raise FormatError(f"{path}: block fingerprint {stored or '<none>'} does not match grid {fingerprint}")
    return EnsembleBlock(arrays["y"], int(manifest["attrs"]["time_offset"]), stored)


# --- model state -------------------------------------------------------------

BASIS_SUBDIR = "basis"


def save_state(path, model):
    """Persist a model; the basis goes into a ``basis`` sub-container."""
    path = Path(path)
    arrays = {
        "mean": model.mean, "sigma": model.sigma,
        "gamma": model.tukey.gamma, "kappa": model.tukey.kappa,
        "Phi": model.var.Phi, "K": model.var.K, "X": model.var.X,
    }
    attrs = {
        "P": model.P, "R": model.R, "block_lengths": [int(b) for b in model.block_lengths],
        "moment_count": int(model.tukey.count), "h_cap": model.tukey.h_cap,
        "n_eff": int(model.var.n_eff), "retransform": bool(model.retransform),
        "tgh": bool(model.tgh), "ridge": float(model.ridge),
    }
    if model.tgh:
        arrays["g"] = model.g_state["g"]
        arrays["g_slope"] = model.g_state["slope"]
        attrs["g_blocks"] = int(model.g_state["blocks"])
    basis_dir = path / BASIS_SUBDIR
    if not (basis_dir / MANIFEST).is_file() or read_manifest(basis_dir)["fingerprint"] != model.fingerprint:
        if model.grid is None:
            raise ConfigurationError("model has no grid attached; cannot store its basis")
        write_basis(basis_dir, model.basis, model.grid)
    return write_container(path, "state", arrays, attrs, model.fingerprint)


def load_state(path):
    path = Path(path)
    arrays, manifest = read_container(path, "state")
    attrs = manifest["attrs"]
    basis, grid = read_basis(path / BASIS_SUBDIR)
    if basis.fingerprint != manifest["fingerprint"]:
        raise FormatError(f"{path}: state fingerprint {manifest['fingerprint']} does not match "
                          f"stored basis {basis.fingerprint}")
    P = int(attrs["P"])
    g_state = None
    if attrs["tgh"]:
        g_state = {"g": arrays["g"], "slope": arrays["g_slope"], "blocks": int(attrs["g_blocks"])}
    model = OsgModel(
        basis=basis, P=P, R=int(attrs["R"]), mean=arrays["mean"], sigma=arrays["sigma"],
        tukey=TukeyMomentState(arrays["gamma"], arrays["kappa"], int(attrs["moment_count"]),
                               float(attrs["h_cap"])),
        var=VarState(arrays["Phi"], arrays["K"], arrays["X"], int(attrs["n_eff"]), P),
        block_lengths=[int(b) for b in attrs["block_lengths"]],
        retransform=bool(attrs["retransform"]), tgh=bool(attrs["tgh"]),
        ridge=float(attrs["ridge"]), g_state=g_state, grid=grid,
    )
    return model


def payload_bytes(path):
    """Total size of the payload files of one container (manifest excluded)."""
    manifest = read_manifest(path)
    return sum((Path(path) / e["file"]).stat().st_size for e in manifest["arrays"].values())


# --- synthetic truth and validation reports -----------------------------------

def save_truth(path, truth, grid):
    path = Path(path)
    write_basis(path / BASIS_SUBDIR, truth.basis, grid)
    return write_container(
        path, "truth",
        {"omega": truth.omega, "h": truth.h, "Phi": truth.Phi, "K": truth.K,
         "sigma": truth.sigma, "base": truth.base, "amplitude": truth.amplitude,
         "phase": truth.phase},
        {"P": truth.P, "period": truth.period, "burn_in": truth.burn_in},
        truth.basis.fingerprint,
    )


def load_truth(path):
    """Return ``(truth, grid)``."""
    path = Path(path)
    arrays, manifest = read_container(path, "truth")
    attrs = manifest["attrs"]
    basis, grid = read_basis(path / BASIS_SUBDIR)
    truth = SyntheticTruth(basis=basis, P=int(attrs["P"]), period=float(attrs["period"]),
                           burn_in=int(attrs["burn_in"]), **arrays)
    return truth, grid


def save_validation(path, reports, grid, time_offset):
    """Store per-variable :class:`IndexReport` objects with cell coordinates."""
    lat, lon = grid.cell_coordinates(masked_only=True)
    arrays = {"latitude": lat, "longitude": lon}
    for var, rep in reports.items():
        for name in ("uq", "wdt", "rq", "wds", "reference_sd"):
            arrays[f"{name}_{var}"] = getattr(rep, name)
    return write_container(path, "validation", arrays,
                           {"variables": list(reports), "time_offset": int(time_offset)},
                           grid.fingerprint)


def load_validation(path):
    arrays, manifest = read_container(path, "validation")
    return arrays, manifest["attrs"]
