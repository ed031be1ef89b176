"""FastAPI service wrapping the optimization runners.

The CLI calls the same handler functions in-process; over HTTP the payloads
are identical, so artifacts are byte-identical either way.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import HydroDataError, NumericalError, ScenarioError
from ..runner import (
    run_convergence_study,
    run_evaluate,
    run_grid_search,
    run_optimize,
)
from .models import (
    ConvergenceStudyRequest,
    ConvergenceStudyResponse,
    EvaluateRequest,
    EvaluateResponse,
    GridSearchRequest,
    GridSearchResponse,
    HealthResponse,
    OptimizeRequest,
    OptimizeResponse,
)


def handle_optimize(req: OptimizeRequest) -> OptimizeResponse:
    out = run_optimize(req.scenario, seed=req.seed, method=req.method)
    return OptimizeResponse(summary=out.summary, history_csv=out.history_csv,
                            device_map_csv=out.device_map_csv,
                            feasible=out.report.feasible,
                            exit_code=out.exit_code,
                            wall_time_s=out.report.wall_time_s)


def handle_evaluate(req: EvaluateRequest) -> EvaluateResponse:
    report = run_evaluate(req.scenario, req.damping_ns_m, req.stiffness_n_m,
                          n_check=req.n_check)
    return EvaluateResponse(report=report)


def handle_grid_search(req: GridSearchRequest) -> GridSearchResponse:
    out = run_grid_search(req.scenario, (req.c_min, req.c_max),
                          (req.s_min, req.s_max), req.resolution,
                          n_check=req.n_check)
    return GridSearchResponse(grid_csv=out.grid_csv, best=out.best,
                              summary=out.summary)


def handle_convergence_study(req: ConvergenceStudyRequest) -> ConvergenceStudyResponse:
    out = run_convergence_study(req.scenario, req.method, req.n_values,
                                req.n_seeds, n_ref=req.n_ref,
                                mu_scale=req.mu_scale, tau_in=req.tau_in,
                                unconstrained=req.unconstrained)
    return ConvergenceStudyResponse(study_csv=out.study_csv, summary=out.summary)


def create_app() -> FastAPI:
    app = FastAPI(title="wecpark", version=__version__,
                  description="Robust control optimization service for "
                              "wave-energy converter arrays")

    def guarded(handler, req):
        try:
            return handler(req)
        except (ScenarioError, HydroDataError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except NumericalError as exc:
            raise HTTPException(status_code=500,
                                detail=f"numeric failure: {exc}") from exc

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/optimize", response_model=OptimizeResponse)
    def optimize(req: OptimizeRequest) -> OptimizeResponse:
        return guarded(handle_optimize, req)

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: EvaluateRequest) -> EvaluateResponse:
        return guarded(handle_evaluate, req)

    @app.post("/grid-search", response_model=GridSearchResponse)
    def grid_search(req: GridSearchRequest) -> GridSearchResponse:
        return guarded(handle_grid_search, req)

    @app.post("/convergence-study", response_model=ConvergenceStudyResponse)
    def convergence_study(req: ConvergenceStudyRequest) -> ConvergenceStudyResponse:
        return guarded(handle_convergence_study, req)

    return app


app = create_app()
