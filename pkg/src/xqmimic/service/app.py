"""HTTP wiring: routes, error mapping, optional static client bundle.

Every domain error surfaces as ``{code, message, detail}``; the status
code depends only on the error family, never on the route.  Handlers
are synchronous on purpose: they run in the framework's thread pool and
the session store's locks do the serialization.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..errors import (
    NotYourTurn,
    SessionFinished,
    UnknownModel,
    UnknownSession,
    XqError,
)
from ..movespace import MoveVocabulary
from . import moves
from .schemas import AnalyzeRequest, MoveRequest, SessionCreate
from .sessions import SessionStore
from .store import ModelStore


def _status_code(exc: XqError) -> int:
    if isinstance(exc, (UnknownModel, UnknownSession)):
        return 404
    if isinstance(exc, (NotYourTurn, SessionFinished)):
        return 409
    return 400


def _detail(exc: XqError) -> dict:
    detail = {}
    for attr in ("legal_moves", "index", "offset", "fields"):
        value = getattr(exc, attr, None)
        if value:
            detail[attr] = value
    return detail


def create_app(
    models_dir,
    persist_dir=None,
    static_dir=None,
    vocabulary: Optional[MoveVocabulary] = None,
) -> FastAPI:
    models = ModelStore(models_dir, vocabulary)
    sessions = SessionStore(models, persist_dir=persist_dir)

    app = FastAPI(title="xqmimic service", version=__version__)
    app.state.models = models
    app.state.sessions = sessions

    @app.exception_handler(XqError)
    def on_domain_error(request: Request, exc: XqError) -> JSONResponse:
        return JSONResponse(
            status_code=_status_code(exc),
            content={
                "code": exc.code,
                "message": str(exc),
                "detail": jsonable_encoder(_detail(exc)),
            },
        )

    @app.exception_handler(RequestValidationError)
    def on_bad_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={
                "code": "invalid_request",
                "message": "request body failed validation",
                "detail": {"errors": jsonable_encoder(exc.errors())},
            },
        )

    @app.get("/models")
    def list_models() -> dict:
        return {"models": [d.as_dict() for d in models.descriptors()]}

    @app.post("/sessions")
    def create_session(body: SessionCreate) -> dict:
        session = sessions.create(
            model_id=body.model_id,
            human_side=body.human_side,
            policy=body.policy,
            seed=body.seed,
        )
        return sessions.view(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return sessions.view(sessions.get(session_id))

    @app.post("/sessions/{session_id}/moves")
    def play_move(session_id: str, body: MoveRequest) -> dict:
        return sessions.play(
            session_id, body.move, include_distribution=body.include_distribution
        )

    @app.post("/analyze")
    def analyze(body: AnalyzeRequest) -> dict:
        return moves.analyze(
            models,
            model_id=body.model_id,
            history=body.history,
            actual=body.actual,
            ks=body.ks,
            ps=body.ps,
        )

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
