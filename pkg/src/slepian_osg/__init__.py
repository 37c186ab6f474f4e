"""Streaming stochastic generator for regional bivariate ensembles.

Ensemble anomalies are projected on a Slepian basis of the region,
Gaussianized with a Tukey h transform and modelled with a VAR(P); every
parameter can be updated block by block without keeping past data.
"""
from .errors import OsgError
from .harmonics import RegionGrid, harmonic_matrix, quadrature_weights
from .metrics import compute_indices, index_rq, index_uq, index_wds, index_wdt, pac_matrix, wasserstein_1d
from .pipeline import (
    EnsembleBlock,
    OsgModel,
    SyntheticTruth,
    emulate,
    fit_initial,
    fit_stream,
    generate_synthetic,
    ingest_block,
    make_truth,
    rfd,
)
from .slepian import SlepianBasis, analyze, slepian_basis, synthesize

__version__ = "0.1.0"

__all__ = [
    "EnsembleBlock", "OsgError", "OsgModel", "RegionGrid", "SlepianBasis", "SyntheticTruth",
    "analyze", "compute_indices", "emulate", "fit_initial", "fit_stream", "generate_synthetic",
    "harmonic_matrix", "index_rq", "index_uq", "index_wds", "index_wdt", "ingest_block",
    "make_truth", "pac_matrix", "quadrature_weights", "rfd", "slepian_basis", "synthesize",
    "wasserstein_1d",
]
