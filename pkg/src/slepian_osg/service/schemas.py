"""Request and response models shared by the HTTP service and the CLI.

All file arguments are paths on the machine running the handler.
"""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class ErrorResponse(BaseModel):
    category: str
    message: str


class BasisBuildRequest(BaseModel):
    mask: str
    Q: int = Field(gt=0)
    out: str
    threshold: float = Field(default=0.01, gt=0, le=1)
    A: Optional[int] = Field(default=None, gt=0)
    quadrature: Literal["gauss", "midpoint"] = "gauss"


class BasisBuildResponse(BaseModel):
    path: str
    Q: int
    A: int
    shannon: float
    n_cells: int
    fingerprint: str
    eigenvalues: list[float]


class FitInitRequest(BaseModel):
    basis: str
    block: str
    state: str
    P: int = Field(default=2, ge=1)
    ridge: float = Field(default=0.0, ge=0)
    retransform: bool = False
    tgh: bool = False


class FitUpdateRequest(BaseModel):
    state: str
    blocks: list[str] = Field(min_length=1)
    trace_reference: Optional[str] = None


class TraceRow(BaseModel):
    block: int
    RFD_Phi1: float
    RFD_Phi2: Optional[float] = None
    RFD_K: float


class FitResponse(BaseModel):
    state: str
    T: int
    n_blocks: int
    A: int
    P: int
    spectral_radius: float
    h_median: list[float]
    parameter_count: int
    trace: list[TraceRow] = []


class EmulateRequest(BaseModel):
    state: str
    out: str
    members: int = Field(ge=0)
    seed: Optional[int] = None
    start: int = Field(default=0, ge=0)
    length: Optional[int] = Field(default=None, ge=0)
    residuals: bool = True


class EmulateResponse(BaseModel):
    path: str
    shape: list[int]
    time_offset: int


class ValidateRequest(BaseModel):
    reference: list[str] = Field(min_length=1)
    emulated: str
    basis: str
    out: str


class ValidateResponse(BaseModel):
    path: str
    summary: dict[str, dict[str, dict[str, float]]]


class SynthRequest(BaseModel):
    scenario: Literal["long", "short"]
    out: str
    seed: int = 0
    members: int = Field(default=10, ge=2)
    blocks: Optional[int] = Field(default=None, ge=1)
    A: int = Field(default=10, gt=0)
    Q: int = Field(default=40, gt=0)
    P: int = Field(default=2, ge=1)
    h: float = Field(default=0.1, ge=0, le=0.24)
    rho: float = Field(default=0.8, gt=0, lt=1)


class SynthResponse(BaseModel):
    mask: str
    basis: str
    truth: str
    blocks: list[str]
    block_lengths: list[int]


class ReportRequest(BaseModel):
    out: str
    validation: Optional[str] = None
    state: Optional[str] = None


class ReportResponse(BaseModel):
    files: list[str]
