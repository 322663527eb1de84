"""FastAPI application wrapping the simulation and analysis handlers."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ResourceLimitError, RotechoError
from . import handlers
from . import schemas as sm

app = FastAPI(
    title="rotecho",
    version=__version__,
    description="Spin-echo simulation of NV centres in rotating diamond "
                "with a 13C nuclear spin bath.",
)


@app.exception_handler(RotechoError)
async def _package_error(_: Request, exc: RotechoError) -> JSONResponse:
    status = 413 if isinstance(exc, ResourceLimitError) else 400
    body = sm.ErrorBody(error=type(exc).__name__, message=str(exc))
    return JSONResponse(status_code=status, content=body.model_dump())


@app.get("/health", response_model=sm.HealthResponse)
def health() -> sm.HealthResponse:
    return sm.HealthResponse(status="ok", version=__version__)


@app.post("/simulate", response_model=sm.SimulateResponse)
def simulate(req: sm.SimulateRequest) -> sm.SimulateResponse:
    return handlers.handle_simulate(req)


@app.post("/sweep/rotation", response_model=sm.SweepRotationResponse)
def sweep_rotation(req: sm.SweepRotationRequest) -> sm.SweepRotationResponse:
    return handlers.handle_sweep_rotation(req)


@app.post("/sweep/field", response_model=sm.SweepFieldResponse)
def sweep_field(req: sm.SweepFieldRequest) -> sm.SweepFieldResponse:
    return handlers.handle_sweep_field(req)


@app.post("/fit", response_model=sm.FitResponse)
def fit(req: sm.FitRequest) -> sm.FitResponse:
    return handlers.handle_fit(req)


@app.post("/validate", response_model=sm.ValidateResponse)
def validate(req: sm.ValidateRequest) -> sm.ValidateResponse:
    return handlers.handle_validate(req)
