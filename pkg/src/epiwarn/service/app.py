"""FastAPI application exposing the epiwarn engine."""

from __future__ import annotations

from .. import _threads  # noqa: F401  (pin BLAS threads before numpy loads)

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import ConfigError, EpiwarnError, ParseError
from ..manifest import TOOL_VERSION
from . import handlers
from .schemas import (
    BacktestRequest,
    BacktestResponse,
    HealthResponse,
    PlotdataRequest,
    PlotdataResponse,
    SynthRequest,
    SynthResponse,
    ValidateRequest,
    ValidateResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="epiwarn",
        description="Epidemic early-warning engine: GP nowcasting, gated "
                    "augmentation, forecasting and backtesting.",
        version=TOOL_VERSION,
    )

    @app.exception_handler(EpiwarnError)
    async def _epiwarn_error(request: Request, exc: EpiwarnError):
        # Input-side problems are the client's to fix; anything else is a
        # genuine engine failure.
        status = 400 if isinstance(exc, (ConfigError, ParseError)) else 500
        return JSONResponse(
            status_code=status,
            content={"detail": {"error_type": type(exc).__name__, "message": str(exc)}},
        )

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=TOOL_VERSION)

    @app.post("/api/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        return handlers.handle_validate(req)

    @app.post("/api/synth", response_model=SynthResponse)
    def synth(req: SynthRequest) -> SynthResponse:
        return handlers.handle_synth(req)

    @app.post("/api/backtest", response_model=BacktestResponse)
    def backtest(req: BacktestRequest) -> BacktestResponse:
        return handlers.handle_backtest(req)

    @app.post("/api/plotdata", response_model=PlotdataResponse)
    def plotdata(req: PlotdataRequest) -> PlotdataResponse:
        return handlers.handle_plotdata(req)

    return app


app = create_app()
