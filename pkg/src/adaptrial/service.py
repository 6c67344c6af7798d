"""HTTP/JSON interface over the conduct store and the simulation harness.

All statistical decisions live in the engines; this layer only parses
requests, serializes responses, and maps package errors onto HTTP codes
as ``{code, message, details}`` bodies. Per-session mutations are
serialized by a session lock; simulations run on a bounded worker pool
with a server-enforced replication cap.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .config import validate_design_config
from .engines import new_run
from .errors import (
    AdaptrialError,
    CorruptLog,
    DepthCap,
    InvalidConfig,
    LookMismatch,
    OutcomeMismatch,
    RepsCapExceeded,
    SessionStopped,
    UnknownSession,
    UnsupportedDesign,
)
from .session import SessionStore, parse_outcome
from .simulator import Scenario, simulate_trials

DEFAULT_REPS_CAP = 100_000

_STATUS_BY_CODE = {
    InvalidConfig.code: 422,
    UnknownSession.code: 404,
    SessionStopped.code: 409,
    OutcomeMismatch.code: 409,
    CorruptLog.code: 409,
    UnsupportedDesign.code: 400,
    DepthCap.code: 400,
    LookMismatch.code: 400,
    RepsCapExceeded.code: 400,
}


def create_app(
    data_dir: Path | str | None = None,
    reps_cap: int = DEFAULT_REPS_CAP,
    simulation_workers: int = 4,
    ui_dir: Path | str | None = None,
) -> FastAPI:
    store = SessionStore(data_dir)
    app = FastAPI(title="adaptrial", version="0.1.0")
    locks: dict[str, threading.Lock] = defaultdict(threading.Lock)

    @app.exception_handler(AdaptrialError)
    async def handle_package_error(request: Request, exc: AdaptrialError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": exc.message, "details": exc.details},
        )

    def session_response(session) -> dict:
        return {
            "session": session.summary(),
            "state": {
                "status": session.state.status,
                "stage": session.state.stage,
                "n_enrolled": session.state.n_enrolled,
                "active_arms": sorted(session.state.active_arms),
            },
            "recommendation": session.recommendation.to_dict(),
        }

    @app.post("/designs/validate")
    def designs_validate(body: dict = Body(...)):
        config = validate_design_config(body)
        return {"valid": True, "config": config.to_dict(), "design_id": config.design_id}

    @app.post("/designs/simulate")
    def designs_simulate(body: dict = Body(...)):
        config = validate_design_config(body.get("design", {}))
        scenario = Scenario.from_dict(body.get("scenario", {}))
        if scenario.n_reps > reps_cap:
            raise RepsCapExceeded(
                f"requested {scenario.n_reps} replicates exceeds the server cap",
                details={"cap": reps_cap, "suggested_reps": reps_cap},
            )
        oc = simulate_trials(config, scenario, workers=simulation_workers)
        return {"operating_characteristics": oc.to_dict(), "scenario": scenario.to_dict()}

    @app.post("/sessions", status_code=201)
    def sessions_create(body: dict = Body(...)):
        session = store.create(body)
        return session_response(session)

    @app.get("/sessions")
    def sessions_list():
        return {"sessions": store.list_sessions()}

    @app.get("/sessions/{session_id}")
    def sessions_get(session_id: str):
        return session_response(store.load(session_id))

    @app.post("/sessions/{session_id}/outcomes")
    def sessions_post_outcomes(session_id: str, body: dict = Body(...)):
        with locks[session_id]:
            session = store.load(session_id)
            outcome = parse_outcome(session.run.outcome_kind, body.get("outcome"))
            session = store.post_outcomes(session_id, outcome, override=bool(body.get("override")))
        return session_response(session)

    @app.get("/sessions/{session_id}/recommendation")
    def sessions_recommendation(session_id: str):
        session = store.load(session_id)
        return {"recommendation": session.recommendation.to_dict(), "status": session.state.status}

    @app.get("/sessions/{session_id}/pathways")
    def sessions_pathways(session_id: str, depth: int = 1):
        return {"pathways": store.pathways(session_id, depth), "depth": depth}

    @app.get("/sessions/{session_id}/audit")
    def sessions_audit(session_id: str):
        return PlainTextResponse(store.export_audit(session_id), media_type="application/jsonl")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    app.state.store = store
    return app
