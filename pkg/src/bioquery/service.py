"""Versioned HTTP API over the engine (/api/v1).

Runs are created and polled; guided runs expose their outstanding choice
and accept selections; results negotiate between delimiter-separated text
and structured records; an evaluation endpoint scores uploaded run files.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .engine import Engine
from .errors import EngineError, MetricsError, RunStateError


class CreateRunRequest(BaseModel):
    query: str = Field(min_length=1)
    mode: str = "auto"
    knowledge: str | None = None


class ChoiceRequestBody(BaseModel):
    option_ids: list[str] | None = None
    option_id: str | None = None


class FollowupRequest(BaseModel):
    followup: str = Field(min_length=1)


class EvaluateRequest(BaseModel):
    run_lines: list[str]
    k: int = 4
    m: int = 4


class BioFlowRequest(BaseModel):
    query: str = Field(min_length=1)
    tables: dict[str, str] = Field(default_factory=dict)
    retrieval_term: str | None = None


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="bioquery service", version="1")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _run_or_404(run_id: str):
        try:
            return engine.get_run(run_id)
        except RunStateError:
            raise HTTPException(status_code=404, detail=f"no run {run_id}") from None

    @app.get("/api/v1/health")
    def health() -> dict:
        return {"status": "ok", "corpus_size": len(engine.index)}

    @app.get("/api/v1/examples")
    def examples() -> dict:
        return {"examples": engine.config.example_queries}

    @app.post("/api/v1/runs", status_code=201)
    def create_run(request: CreateRunRequest) -> dict:
        if request.mode not in ("auto", "guided"):
            raise HTTPException(status_code=400, detail=f"unknown mode {request.mode!r}")
        run = engine.submit(request.query, mode=request.mode, knowledge=request.knowledge)
        return run.as_dict(include_steps=False)

    @app.get("/api/v1/runs")
    def list_runs() -> dict:
        return {"runs": engine.store.ids()}

    @app.get("/api/v1/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        return _run_or_404(run_id).as_dict(include_steps=False)

    @app.get("/api/v1/runs/{run_id}/steps")
    def get_steps(run_id: str) -> dict:
        _run_or_404(run_id)
        return {"steps": engine.steps_snapshot(run_id)}

    @app.get("/api/v1/runs/{run_id}/choice")
    def get_choice(run_id: str) -> dict:
        run = _run_or_404(run_id)
        return {"choice": run.outstanding.as_dict() if run.outstanding else None}

    @app.post("/api/v1/runs/{run_id}/choice")
    def submit_choice(run_id: str, body: ChoiceRequestBody) -> dict:
        _run_or_404(run_id)
        ids = body.option_ids if body.option_ids else body.option_id
        if not ids:
            raise HTTPException(status_code=400, detail="no option selected")
        try:
            run = engine.submit_choice(run_id, ids)
        except RunStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return run.as_dict(include_steps=False)

    @app.post("/api/v1/runs/{run_id}/followup", status_code=201)
    def submit_followup(run_id: str, body: FollowupRequest) -> dict:
        _run_or_404(run_id)
        try:
            run = engine.followup_postprocess(run_id, body.followup)
        except RunStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return run.as_dict(include_steps=False)

    @app.get("/api/v1/runs/{run_id}/result")
    def get_result(run_id: str, format: str = Query(default="json")):
        run = _run_or_404(run_id)
        if run.state == "failed":
            raise HTTPException(status_code=409, detail={"error": run.error})
        if run.state != "done" or run.result is None:
            raise HTTPException(status_code=409, detail=f"run is {run.state}")
        table = run.result
        if format == "csv":
            return PlainTextResponse(table.render_delimited(","), media_type="text/csv")
        if format == "tsv":
            return PlainTextResponse(
                table.render_delimited("\t"), media_type="text/tab-separated-values"
            )
        if format == "json":
            return {
                "columns": [{"name": c.name, "type": c.type} for c in table.columns],
                "rows": table.rows,
                "provenance": table.provenance,
            }
        raise HTTPException(status_code=400, detail=f"unknown format {format!r}")

    @app.post("/api/v1/evaluate")
    def evaluate(request: EvaluateRequest) -> dict:
        try:
            report = engine.evaluate_run_lines(request.run_lines, k=request.k, m=request.m)
        except (MetricsError, EngineError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return report.as_dict()

    @app.post("/api/v1/bioflow")
    def run_bioflow(request: BioFlowRequest, format: str = Query(default="json")):
        from .bioflow import TableRegistryFacade, execute, parse_bioflow
        from .table import parse_delimited

        try:
            plan = parse_bioflow(request.query)
            registry = {
                url: parse_delimited(text) for url, text in request.tables.items()
            }
            result = execute(
                plan,
                TableRegistryFacade(registry, retrieval_term=request.retrieval_term),
            )
        except EngineError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if format == "csv":
            return PlainTextResponse(result.render_delimited(","), media_type="text/csv")
        if format == "tsv":
            return PlainTextResponse(
                result.render_delimited("\t"), media_type="text/tab-separated-values"
            )
        return {
            "columns": [{"name": c.name, "type": c.type} for c in result.columns],
            "rows": result.rows,
            "provenance": result.provenance,
        }

    return app
