"""FastAPI application.

Run with:  uvicorn voxelenc.service.app:app

Domain errors map to HTTP statuses by their exit-code class: validation
problems become 400, file and format problems become 422. The detail
body carries the exit code so the CLI client can mirror it.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import VoxelencError
from . import handlers, schemas

app = FastAPI(title="voxelenc", version=__version__)


@app.exception_handler(VoxelencError)
async def _domain_error(request: Request, exc: VoxelencError):
    status = 400 if exc.exit_code == 1 else 422
    return JSONResponse(
        status_code=status,
        content={"detail": {"error": str(exc), "exit_code": exc.exit_code}},
    )


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return handlers.do_health()


@app.post("/inspect", response_model=schemas.InspectResponse)
def inspect(req: schemas.InspectRequest):
    return handlers.do_inspect(req)


@app.post("/fit", response_model=schemas.FitResponse)
def fit(req: schemas.FitRequest):
    return handlers.do_fit(req)


@app.post("/predict", response_model=schemas.PredictResponse)
def predict(req: schemas.PredictRequest):
    return handlers.do_predict(req)


@app.post("/eval", response_model=schemas.EvalResponse)
def eval_(req: schemas.EvalRequest):
    return handlers.do_eval(req)


@app.post("/experiments/{kind}")
def experiment(kind: str, req: schemas.ExperimentRequest):
    return handlers.do_experiment(kind, req)


@app.post("/ttest", response_model=schemas.TTestResponse)
def ttest(req: schemas.TTestRequest):
    return handlers.do_ttest(req)


@app.post("/synth", response_model=schemas.SynthResponse)
def synth(req: schemas.SynthRequest):
    return handlers.do_synth(req)
