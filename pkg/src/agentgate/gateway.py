"""HTTP gateway: the wire surface the principal console (and scripts) use to
list sessions, inspect ledgers, receive escalations, and submit decisions
and feedback.

Mutating calls are serialized per session so the engine's single-writer rule
holds; reads may advance a scripted counterparty to its next blocking point,
which keeps demo sessions moving between polls without a background thread.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field as dataclass_field

from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse

from .engine import (
    DECISION_APPROVE_DRAFT,
    DECISION_APPROVE_OPTION,
    DECISION_DECLINE,
    DECISION_GUIDANCE,
    DECISION_REJECT_DRAFT,
    Engine,
    IllegalEventError,
    PrincipalDecision,
    PrincipalFeedback,
    SendMessage,
    SessionStart,
    SessionState,
    UnknownOptionError,
)
from .personas import Persona, PersonaRun

CODE_NOT_FOUND = "NOT_FOUND"
CODE_CONFLICT = "CONFLICT"
CODE_INVALID = "INVALID"
CODE_TERMINAL = "TERMINAL"

_STATUS = {
    CODE_NOT_FOUND: 404,
    CODE_CONFLICT: 409,
    CODE_INVALID: 422,
    CODE_TERMINAL: 409,
}


class ApiError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass
class SessionHandle:
    """One hosted session plus its optional scripted counterparty."""

    engine: Engine
    session: SessionState
    persona_run: PersonaRun | None = None
    last_send: SendMessage | None = None
    started: bool = False
    lock: threading.Lock = dataclass_field(default_factory=threading.Lock)

    def start(self) -> None:
        if self.started:
            return
        self.started = True
        result = self.engine.step(self.session, SessionStart())
        self._track(result.actions)
        self.advance()

    def _track(self, actions) -> None:
        for action in actions:
            if isinstance(action, SendMessage):
                self.last_send = action

    def blocked(self) -> bool:
        return (
            self.session.closed
            or self.session.pending_escalation is not None
            or self.session.pending_approval is not None
        )

    def advance(self, max_steps: int = 200) -> None:
        """Feed scripted counterparty replies until the session blocks."""
        if self.persona_run is None:
            return
        from .engine import CounterpartyMessage, Timeout

        silent = 0
        for _ in range(max_steps):
            if self.blocked() or self.last_send is None:
                return
            reply = self.persona_run.respond(self.last_send)
            if reply is None:
                silent += 1
                if silent < 2:
                    continue
                result = self.engine.step(self.session, Timeout())
                silent = 0
            else:
                silent = 0
                text, values = reply
                result = self.engine.step(
                    self.session, CounterpartyMessage(text=text, structured_values=values)
                )
            self._track(result.actions)

    def step_decision(self, decision: PrincipalDecision) -> None:
        result = self.engine.step(self.session, decision)
        self._track(result.actions)


class SessionStore:
    def __init__(self) -> None:
        self._handles: dict[str, SessionHandle] = {}

    def add(self, handle: SessionHandle) -> None:
        self._handles[handle.session.session_id] = handle

    def get(self, session_id: str) -> SessionHandle:
        try:
            return self._handles[session_id]
        except KeyError:
            raise ApiError(CODE_NOT_FOUND, f"unknown session {session_id!r}") from None

    def all(self) -> list[SessionHandle]:
        return list(self._handles.values())


def project_session(handle: SessionHandle) -> dict:
    """The console view of a session; every value is audit-derivable."""
    session = handle.session
    events = handle.engine.audit_log.events(session.session_id)
    ledger = session.ledger
    pending = session.pending_escalation
    approval = session.pending_approval
    return {
        "session_id": session.session_id,
        "state": session.state.value,
        "terminal": session.closed,
        "awaiting_decision": pending is not None or approval is not None,
        "tci": ledger.tci,
        "tci_weighted": ledger.tci_weighted,
        "revealed_count": ledger.revealed_count,
        "required_count": len(session.config.required_fields),
        "missing": list(ledger.missing),
        "round": session.round,
        "pending_escalation": pending.to_dict() if pending else None,
        "pending_approval": approval.to_dict() if approval else None,
        "last_updated": events[-1].timestamp if events else None,
        "audit_tail_seq": events[-1].seq if events else 0,
        "scenario": dict(session.scenario),
    }


def _error_response(error: ApiError) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS[error.code],
        content={"code": error.code, "message": error.message},
    )


def _decision_from_body(body: dict) -> PrincipalDecision:
    kind = body.get("kind")
    if kind is None:
        if body.get("option_id"):
            kind = DECISION_APPROVE_OPTION
        elif body.get("guidance"):
            kind = DECISION_GUIDANCE
        else:
            raise ApiError(CODE_INVALID, "decision needs kind, option_id, or guidance")
    valid = {
        DECISION_APPROVE_OPTION,
        DECISION_DECLINE,
        DECISION_GUIDANCE,
        DECISION_APPROVE_DRAFT,
        DECISION_REJECT_DRAFT,
    }
    if kind not in valid:
        raise ApiError(CODE_INVALID, f"unknown decision kind {kind!r}")
    return PrincipalDecision(
        kind=kind, option_id=body.get("option_id"), guidance=body.get("guidance")
    )


def build_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="agentgate principal gateway")

    # The console is served from a different origin during development.
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ApiError)
    async def handle_api_error(request, exc: ApiError):
        return _error_response(exc)

    @app.get("/sessions")
    def list_sessions():
        out = []
        for handle in store.all():
            with handle.lock:
                handle.advance()
                out.append(project_session(handle))
        out.sort(key=lambda row: row["session_id"])
        return out

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        handle = store.get(session_id)
        with handle.lock:
            handle.advance()
            return project_session(handle)

    @app.get("/sessions/{session_id}/escalation")
    def get_escalation(session_id: str):
        handle = store.get(session_id)
        with handle.lock:
            handle.advance()
            if handle.session.closed:
                raise ApiError(CODE_TERMINAL, "session is terminal")
            payload = handle.session.pending_escalation
            if payload is None:
                raise ApiError(CODE_NOT_FOUND, "session has no pending escalation")
            return payload.to_dict()

    @app.post("/sessions/{session_id}/decision")
    def post_decision(session_id: str, body: dict):
        handle = store.get(session_id)
        decision = _decision_from_body(body)
        with handle.lock:
            session = handle.session
            if session.closed:
                raise ApiError(CODE_TERMINAL, "session is terminal")
            if session.pending_escalation is None and session.pending_approval is None:
                raise ApiError(CODE_CONFLICT, "no pending decision for this session")
            try:
                handle.step_decision(decision)
            except UnknownOptionError as exc:
                raise ApiError(CODE_INVALID, str(exc)) from exc
            except IllegalEventError as exc:
                raise ApiError(CODE_CONFLICT, str(exc)) from exc
            except ValueError as exc:
                raise ApiError(CODE_INVALID, str(exc)) from exc
            return project_session(handle)

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: dict):
        handle = store.get(session_id)
        text = (body.get("text") or "").strip()
        if not text:
            raise ApiError(CODE_INVALID, "feedback text must be non-empty")
        with handle.lock:
            session = handle.session
            if session.closed:
                raise ApiError(CODE_TERMINAL, "session is terminal")
            try:
                handle.engine.step(
                    session,
                    PrincipalFeedback(
                        text=text,
                        category=body.get("category", "constraint"),
                        constrains=body.get("constrains"),
                        directive=body.get("directive"),
                    ),
                )
            except IllegalEventError as exc:
                raise ApiError(CODE_TERMINAL, str(exc)) from exc
            events = handle.engine.audit_log.events(session.session_id)
            return {
                "stored": True,
                "session_id": session_id,
                "audited_seq": events[-1].seq,
            }

    @app.get("/sessions/{session_id}/audit")
    def get_audit(session_id: str, from_seq: int = Query(1, alias="from")):
        handle = store.get(session_id)
        with handle.lock:
            events = handle.engine.audit_log.events(session_id, from_seq=from_seq)
            return {"events": [event.to_dict() for event in events]}

    return app


def serve_scenario(
    config,
    persona: Persona,
    seed: int = 0,
    session_id: str | None = None,
    **engine_kwargs,
) -> tuple[SessionStore, FastAPI]:
    """Host one scripted session that pauses whenever a human must decide."""
    persona.validate_against(config)
    engine = Engine(config, **engine_kwargs)
    sid = session_id or f"{config.domain_id}-{persona.persona_id}-{seed}"
    session = engine.init_session(
        sid, scenario={"persona": persona.persona_id, "seed": seed}
    )
    handle = SessionHandle(engine=engine, session=session, persona_run=PersonaRun(persona))
    store = SessionStore()
    store.add(handle)
    handle.start()
    return store, build_app(store)
