"""HTTP service over the engine: sessions, feedback, registries, bench runs.

Sessions started over HTTP run on background threads; the caller follows
along on the server-sent event feed (`GET /sessions/{id}/events?from=`)
and releases human gates with POSTed feedback. Every non-2xx response
carries a structured {code, message, detail} body.
"""
from __future__ import annotations

import json
import re
import threading
import uuid
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .bench import TrialBudget, EngineMCQRunner, ItemRunner, evaluate, load_dataset, save_report
from .errors import EvoAgentError, StateError, ValidationError
from .orchestrator import HumanFeedback, Orchestrator

_LOOKUP_MISS = re.compile(r"^unknown (session|step|tool|template|run|item)")

_STATUS_BY_CODE = {
    "validation": 422,
    "state": 409,
    "gating": 409,
    "sandbox_busy": 409,
    "config": 400,
    "load": 400,
    "schema": 422,
    "provider": 502,
    "replay_divergence": 502,
    "plan_parse": 502,
    "verdict_parse": 502,
    "tool_creation": 502,
    "replay": 400,
}


class SessionRequest(BaseModel):
    goal: str = Field(min_length=1)
    max_iterations: int | None = None
    autostart: bool = True


class FeedbackRequest(BaseModel):
    author: str = Field(min_length=1)
    directive: str
    body: str = ""
    target_step: str | None = None


class BenchRequest(BaseModel):
    dataset: str
    budget: int = 1
    seed: int = 0


def _error(status: int, code: str, message: str, detail: Any = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "detail": detail},
    )


def create_app(
    orchestrator: Orchestrator,
    item_runner: ItemRunner | None = None,
    console_dir: str | Path | None = None,
) -> FastAPI:
    """Wire an orchestrator into the HTTP surface. `item_runner` overrides
    the engine-backed benchmark runner (tests inject deterministic ones)."""
    app = FastAPI(title="evoagent", docs_url=None, redoc_url=None)
    bench_runs: dict[str, dict[str, Any]] = {}
    bench_lock = threading.Lock()

    @app.exception_handler(EvoAgentError)
    async def engine_error(_: Request, exc: EvoAgentError):
        # failed lookups are 404s, not validation problems
        status = _STATUS_BY_CODE.get(exc.code, 400)
        if isinstance(exc, ValidationError) and _LOOKUP_MISS.match(str(exc)):
            status = 404
        return _error(status, exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def request_error(_: Request, exc: RequestValidationError):
        return _error(422, "validation", "invalid request body", exc.errors())

    # -- sessions -------------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionRequest):
        session = orchestrator.create_session(body.goal, body.max_iterations)
        if body.autostart:
            thread = threading.Thread(
                target=orchestrator.run_to_completion,
                args=(session.id,),
                name=f"session-{session.id}",
                daemon=True,
            )
            thread.start()
        return {"session_id": session.id, "status": session.status.value}

    @app.get("/sessions")
    def list_sessions():
        return {
            "sessions": [
                {
                    "session_id": sid,
                    "status": orchestrator.session(sid).status.value,
                    "goal": orchestrator.session(sid).goal,
                }
                for sid in orchestrator.sessions()
            ]
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        if session_id not in orchestrator.sessions():
            return _error(404, "not_found", f"unknown session: {session_id}")
        return orchestrator.session_view(session_id)

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, request: Request, from_seq: int = 1, wait: bool = True):
        # `from_seq` is exposed as ?from= for clients; FastAPI query alias
        raw_from = request.query_params.get("from")
        if raw_from is not None:
            from_seq = int(raw_from)
        if session_id not in orchestrator.store.sessions():
            return _error(404, "not_found", f"unknown session: {session_id}")

        def feed() -> Iterator[str]:
            stop = None if wait else (lambda: True)
            for event in orchestrator.store.subscribe(session_id, from_seq=from_seq, stop=stop):
                payload = json.dumps(event.to_record(), sort_keys=True)
                yield f"id: {event.global_seq}\ndata: {payload}\n\n"
            yield "event: end\ndata: {}\n\n"

        return StreamingResponse(feed(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/feedback", status_code=202)
    def post_feedback(session_id: str, body: FeedbackRequest):
        if session_id not in orchestrator.sessions():
            return _error(404, "not_found", f"unknown session: {session_id}")
        try:
            ack = orchestrator.inject_feedback(
                session_id,
                HumanFeedback(
                    author=body.author,
                    directive=body.directive,
                    body=body.body,
                    target_step=body.target_step,
                ),
            )
        except StateError as exc:
            return _error(409, "state", str(exc))
        return ack

    # -- registries -------------------------------------------------------------

    @app.get("/tools")
    def list_tools():
        return {"tools": [t.to_record() for t in orchestrator.registry.all()]}

    @app.get("/tools/{tool_id}")
    def get_tool(tool_id: str):
        manifest = orchestrator.registry.get(tool_id)
        if manifest is None:
            return _error(404, "not_found", f"unknown tool: {tool_id}")
        return manifest.to_record()

    @app.post("/tools/{tool_id}/validate")
    def validate_tool(tool_id: str):
        if orchestrator.registry.get(tool_id) is None:
            return _error(404, "not_found", f"unknown tool: {tool_id}")
        report = orchestrator.registry.validate(tool_id)
        return {
            "tool_id": report.tool_id,
            "passed": report.passed,
            "cases": [{"index": c.index, "passed": c.passed, "detail": c.detail} for c in report.cases],
        }

    @app.get("/templates")
    def list_templates():
        return {"templates": [t.to_record() for t in orchestrator.library.all()]}

    # -- bench ----------------------------------------------------------------

    @app.post("/bench/runs", status_code=201)
    def start_bench(body: BenchRequest):
        items = load_dataset(body.dataset)
        run_id = f"r-{uuid.uuid4().hex[:12]}"
        with bench_lock:
            bench_runs[run_id] = {"status": "running", "report": None}

        def work():
            runner = item_runner or EngineMCQRunner(orchestrator)
            try:
                report = evaluate(runner, items, TrialBudget(body.budget), body.seed)
                out = orchestrator.config.stores.reports / f"{run_id}.json"
                save_report(report, out)
                with bench_lock:
                    bench_runs[run_id] = {"status": "done", "report": report.to_record()}
            except Exception as exc:  # noqa: BLE001 - reported via the run record
                with bench_lock:
                    bench_runs[run_id] = {"status": "failed", "report": None, "error": str(exc)}

        threading.Thread(target=work, name=run_id, daemon=True).start()
        return {"run_id": run_id}

    @app.get("/bench/runs/{run_id}")
    def get_bench(run_id: str):
        with bench_lock:
            run = bench_runs.get(run_id)
        if run is None:
            return _error(404, "not_found", f"unknown run: {run_id}")
        return {"run_id": run_id, **run}

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app
