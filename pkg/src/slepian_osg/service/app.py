"""FastAPI application exposing the handlers over HTTP.

Run with ``uvicorn slepian_osg.service.app:app``.  Failures raised by the
package are returned as ``400`` with an :class:`ErrorResponse` body.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import OsgError
from . import handlers, schemas

app = FastAPI(title="slepian-osg", version="0.1.0")


@app.exception_handler(OsgError)
async def _osg_error(request: Request, exc: OsgError):
    body = schemas.ErrorResponse(category=exc.category, message=str(exc))
    return JSONResponse(status_code=400, content=body.model_dump())


@app.get("/health")
def health():
    return {"status": "ok"}


def route_path(name):
    return "/" + name.replace(".", "/")


@app.post(route_path("basis.build"), response_model=schemas.BasisBuildResponse)
def basis_build(req: schemas.BasisBuildRequest):
    return handlers.build_basis(req)


@app.post(route_path("fit.init"), response_model=schemas.FitResponse)
def fit_init(req: schemas.FitInitRequest):
    return handlers.fit_init(req)


@app.post(route_path("fit.update"), response_model=schemas.FitResponse)
def fit_update(req: schemas.FitUpdateRequest):
    return handlers.fit_update(req)


@app.post(route_path("emulate"), response_model=schemas.EmulateResponse)
def emulate(req: schemas.EmulateRequest):
    return handlers.run_emulation(req)


@app.post(route_path("validate"), response_model=schemas.ValidateResponse)
def validate(req: schemas.ValidateRequest):
    return handlers.validate(req)


@app.post(route_path("synth"), response_model=schemas.SynthResponse)
def synth(req: schemas.SynthRequest):
    return handlers.synth(req)


@app.post(route_path("report"), response_model=schemas.ReportResponse)
def report(req: schemas.ReportRequest):
    return handlers.report(req)
