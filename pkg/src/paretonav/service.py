"""HTTP/JSON session API consumed by the browser console.

One engine per session behind a per-session lock; query building and
posterior updates run on a background thread while the session reports a
computing status, so clients poll the query endpoint for readiness.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import RunConfig
from .errors import (
    BudgetExhaustedError,
    InvalidArgumentError,
    InvalidBoundsError,
    SessionConflictError,
    UnknownProblemError,
)
from .preferences import FeedbackEvent
from .problems import get_problem
from .session import SessionEngine, write_session_log


class CreateSessionRequest(BaseModel):
    problem: str
    seed: int = 0
    mechanism: str = "active_tmosh"
    querying: str = "native"
    initial_soft: Optional[list[float]] = None
    initial_hard: Optional[list[float]] = None
    config: Optional[dict[str, Any]] = None


class FeedbackRequest(BaseModel):
    kind: str
    dimension: int = -1
    old_value: float = float("nan")
    new_value: float = float("nan")
    ranking: list[int] = Field(default_factory=list)


class FinalizeRequest(BaseModel):
    chosen_index: int


class SessionSlot:
    def __init__(self, engine: SessionEngine):
        self.engine = engine
        self.lock = threading.Lock()
        self.busy = False  # a background computation owns the engine
        self.error: str | None = None


def create_app(log_dir: str | None = None, workers: int = 4) -> FastAPI:
    app = FastAPI(title="paretonav session service")
    sessions: dict[str, SessionSlot] = {}
    executor = ThreadPoolExecutor(max_workers=workers)

    def _slot(session_id: str) -> SessionSlot:
        slot = sessions.get(session_id)
        if slot is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return slot

    def _persist(session_id: str, slot: SessionSlot) -> None:
        if log_dir is not None:
            write_session_log(slot.engine.log_records, f"{log_dir}/{session_id}.jsonl")

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            problem = get_problem(req.problem)
        except UnknownProblemError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        cfg = RunConfig.from_dict(req.config) if req.config else RunConfig()
        session_id = uuid.uuid4().hex[:12]
        slot_holder: dict[str, SessionSlot] = {}

        def build():
            try:
                engine = SessionEngine(
                    problem,
                    cfg,
                    mechanism=req.mechanism,
                    querying=req.querying,
                    seed=req.seed,
                    initial_soft=np.array(req.initial_soft) if req.initial_soft else None,
                    initial_hard=np.array(req.initial_hard) if req.initial_hard else None,
                )
                slot = slot_holder["slot"]
                with slot.lock:
                    slot.engine = engine
                    slot.busy = False
                _persist(session_id, slot)
            except Exception as exc:  # surfaced on the next poll
                slot = slot_holder["slot"]
                with slot.lock:
                    slot.error = str(exc)
                    slot.busy = False

        # validate the cheap parts synchronously so bad requests fail fast
        L = problem.num_objectives
        soft0 = np.array(req.initial_soft) if req.initial_soft else np.full(L, cfg.bounds.initial_soft)
        hard0 = np.array(req.initial_hard) if req.initial_hard else np.full(L, cfg.bounds.initial_hard)
        if soft0.shape != (L,) or hard0.shape != (L,):
            raise HTTPException(status_code=422, detail=f"bounds must have length {L}")
        if not np.all(hard0 < soft0):
            raise HTTPException(
                status_code=422, detail="hard bounds must be strictly below soft bounds"
            )
        try:
            from .simulate import validate_combination

            validate_combination(req.mechanism, req.querying)
        except InvalidArgumentError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

        slot = SessionSlot(engine=None)  # type: ignore[arg-type]
        slot.busy = True
        slot_holder["slot"] = slot
        sessions[session_id] = slot
        executor.submit(build)
        return {"id": session_id, "status": "computing"}

    @app.get("/v1/sessions/{session_id}/query")
    def get_query(session_id: str):
        slot = _slot(session_id)
        with slot.lock:
            if slot.error:
                raise HTTPException(status_code=500, detail=slot.error)
            if slot.busy:
                raise HTTPException(status_code=409, detail={"status": "computing"})
            engine = slot.engine
            if engine.status != "awaiting_feedback":
                raise HTTPException(status_code=409, detail={"status": engine.status})
            return _query_payload(engine)

    @app.post("/v1/sessions/{session_id}/feedback")
    def submit_feedback(session_id: str, req: FeedbackRequest):
        slot = _slot(session_id)
        with slot.lock:
            if slot.busy:
                raise HTTPException(status_code=409, detail={"status": "computing"})
            engine = slot.engine
            if engine.status == "finalization_required":
                raise HTTPException(
                    status_code=409,
                    detail={"status": "finalization_required",
                            "message": "interaction budget exhausted; finalize the session"},
                )
            if engine.status != "awaiting_feedback":
                raise HTTPException(status_code=409, detail={"status": engine.status})
            try:
                event = FeedbackEvent(
                    kind=req.kind,
                    dimension=req.dimension,
                    old_value=req.old_value,
                    new_value=req.new_value,
                    ranking=tuple(req.ranking),
                )
                engine._validate_event(event, engine.current_query)
            except (InvalidArgumentError, InvalidBoundsError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            slot.busy = True

        def run():
            try:
                slot.engine.submit_feedback(event)
            except BudgetExhaustedError:
                pass  # status flips to finalization_required
            except Exception as exc:
                with slot.lock:
                    slot.error = str(exc)
            finally:
                with slot.lock:
                    slot.busy = False
                _persist(session_id, slot)

        executor.submit(run)
        return {"status": "computing"}

    @app.post("/v1/sessions/{session_id}/finalize")
    def finalize(session_id: str, req: FinalizeRequest):
        slot = _slot(session_id)
        with slot.lock:
            if slot.busy:
                raise HTTPException(status_code=409, detail={"status": "computing"})
            try:
                summary = slot.engine.finalize(req.chosen_index)
            except SessionConflictError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except InvalidArgumentError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            _persist(session_id, slot)
            return summary

    @app.get("/v1/sessions/{session_id}/sensitivity")
    def sensitivity(session_id: str):
        slot = _slot(session_id)
        with slot.lock:
            if slot.busy:
                raise HTTPException(status_code=409, detail={"status": "computing"})
            engine = slot.engine
            if engine.last_activity is None:
                return {"available": False}
            return {"available": True, **engine.last_activity.to_dict()}

    @app.get("/v1/sessions/{session_id}/observed")
    def observed(session_id: str):
        slot = _slot(session_id)
        with slot.lock:
            if slot.busy:
                raise HTTPException(status_code=409, detail={"status": "computing"})
            engine = slot.engine
            return {
                "status": engine.status,
                "points": [p.to_dict() for p in engine.observed],
            }

    return app


def _query_payload(engine: SessionEngine) -> dict:
    post = engine.bounds_posterior
    return {
        "status": engine.status,
        "round": engine.round_index,
        "units_spent": engine.budget.spent,
        "units_total": engine.budget.total_units,
        "query": engine.current_query.to_dict(),
        "bounds": post.to_dict(),
        "lambda_mean": engine.pref_state.mean().tolist(),
        "objective_names": [f"objective_{i}" for i in range(engine.problem.num_objectives)],
    }
