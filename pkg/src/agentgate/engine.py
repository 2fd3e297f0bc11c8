"""Protocol engine: the labeled transition system driving one session.

States flow START -> opening question -> SCREEN -> NEGOTIATE -> SUMMARIZE ->
{AGREE, NO_DEAL}, with ESCALATE and STALL reachable from any active state.
The engine enforces the runtime invariants:

* no SCREEN->NEGOTIATE transition below the information gate,
* the completeness ledger never loses a revealed field,
* every counterparty-bound draft passes preflight or waits for an explicit
  principal approval,
* every change appends gapless audit events.

All timing is logical so identical inputs replay to byte-identical logs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dataclass_field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .domain import BOUNDARY_NUMERIC_BAND, BoundaryRule, DomainConfig, load_domain_config
from .feedback import (
    CHANNEL_CRITIC,
    CHANNEL_HUMAN,
    CHANNEL_SAFETY,
    BudgetStarvationError,
    FeedbackItem,
    FeedbackStore,
    decay_stale,
    merge_channels,
)
from .safety import (
    LABEL_ADVERSARIAL,
    REQUIRED_LABELS,
    TRIGGER_ADVERSARIAL,
    TRIGGER_AMBIGUITY,
    TRIGGER_BOUNDARY,
    TRIGGER_BUDGET,
    TRIGGER_CONFLICT,
    TRIGGER_SENTIMENT,
    DraftMessage,
    EscalationOption,
    EscalationPayload,
    LexiconModerator,
    SafetyVerdict,
    build_escalation_payload,
    preflight,
)
from .stcc import BeliefState, build_stcc_question, rank_attributes, validate_neutral_compliance
from .tci import ModelExtractor, TciLedger, compute_tci, is_stalled
from .transcript import SPEAKER_COUNTERPARTY, SPEAKER_DELEGATE, Message


class ProtocolState(str, Enum):
    START = "START"
    STCC = "STCC"
    SCREEN = "SCREEN"
    NEGOTIATE = "NEGOTIATE"
    SUMMARIZE = "SUMMARIZE"
    AGREE = "AGREE"
    NO_DEAL = "NO_DEAL"
    ESCALATE = "ESCALATE"
    STALL = "STALL"

    @property
    def is_terminal(self) -> bool:
        return self in (
            ProtocolState.AGREE,
            ProtocolState.NO_DEAL,
            ProtocolState.ESCALATE,
            ProtocolState.STALL,
        )

    @property
    def is_closed(self) -> bool:
        """Truly final: no event, not even a principal decision, applies."""
        return self in (ProtocolState.AGREE, ProtocolState.NO_DEAL, ProtocolState.STALL)


AUDIT_KINDS = (
    "transition",
    "tci_update",
    "critic_suggestion",
    "human_override",
    "safety_event",
    "escalation",
    "principal_decision",
    "outcome",
)


class InvariantViolation(RuntimeError):
    """A runtime invariant would be broken; the message names it."""


class IllegalEventError(RuntimeError):
    """Event not acceptable in the session's current state."""


class UnknownOptionError(ValueError):
    """Principal decision referenced an option absent from the payload."""


class IntegrityError(ValueError):
    """Snapshot document failed its integrity check."""


class LogicalClock:
    """Deterministic timestamps derived from the audit sequence."""

    BASE = datetime(2026, 1, 1, tzinfo=timezone.utc)

    def stamp(self, seq: int) -> str:
        return (self.BASE + timedelta(seconds=seq)).isoformat()


class WallClock:
    """Real timestamps for live service use (breaks replay byte-identity)."""

    def stamp(self, seq: int) -> str:
        return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    timestamp: str
    session_id: str
    kind: str
    payload: dict
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.kind not in AUDIT_KINDS:
            raise ValueError(f"unknown audit kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "session_id": self.session_id,
            "kind": self.kind,
            "payload": self.payload,
            "rationale": self.rationale,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "AuditEvent":
        return cls(
            seq=raw["seq"],
            timestamp=raw["timestamp"],
            session_id=raw["session_id"],
            kind=raw["kind"],
            payload=raw["payload"],
            rationale=raw.get("rationale", ""),
        )


class AuditLog:
    """Append-only per-session event store with an optional JSONL sink.

    Appends from different sessions may interleave in the file; per-session
    ordering is preserved because each session has a single writer.
    """

    def __init__(self, directory: Path | str | None = None):
        self.directory = Path(directory) if directory else None
        self._events: dict[str, list[AuditEvent]] = {}
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    def append(self, event: AuditEvent) -> None:
        events = self._events.setdefault(event.session_id, [])
        expected = events[-1].seq + 1 if events else 1
        if event.seq != expected:
            raise InvariantViolation(
                f"audit gap for {event.session_id}: got seq {event.seq}, expected {expected}"
            )
        events.append(event)
        if self.directory:
            path = self.directory / f"{event.session_id}.jsonl"
            with path.open("a", encoding="utf-8") as handle:
                handle.write(event.to_json_line() + "\n")

    def events(self, session_id: str, from_seq: int = 1) -> list[AuditEvent]:
        return [e for e in self._events.get(session_id, []) if e.seq >= from_seq]

    def session_ids(self) -> list[str]:
        return list(self._events)


# --- events fed into the engine -------------------------------------------


@dataclass(frozen=True)
class SessionStart:
    pass


@dataclass(frozen=True)
class CounterpartyMessage:
    text: str
    structured_values: dict = dataclass_field(default_factory=dict)


@dataclass(frozen=True)
class PrincipalFeedback:
    text: str
    category: str = "constraint"
    constrains: str | None = None
    directive: str | None = None


DECISION_APPROVE_OPTION = "approve_option"
DECISION_DECLINE = "decline"
DECISION_GUIDANCE = "guidance"
DECISION_APPROVE_DRAFT = "approve_draft"
DECISION_REJECT_DRAFT = "reject_draft"


@dataclass(frozen=True)
class PrincipalDecision:
    kind: str
    option_id: str | None = None
    guidance: str | None = None


@dataclass(frozen=True)
class Timeout:
    pass


# --- actions emitted by the engine ----------------------------------------


@dataclass(frozen=True)
class SendMessage:
    target: str
    text: str
    kind: str  # question | proposal | counter | summary | recap | deflection
    field_id: str | None = None
    options: tuple[str, ...] = ()
    proposed: dict | None = None


@dataclass(frozen=True)
class NotifyPrincipal:
    notice: str  # escalation | approval
    detail: dict


@dataclass(frozen=True)
class SessionEnded:
    outcome: str
    terms: dict | None = None


@dataclass
class PendingApproval:
    """A draft held back by preflight, awaiting a principal decision."""

    draft_id: str
    draft: DraftMessage
    verdict: SafetyVerdict
    deliverable_text: str
    kind: str
    field_id: str | None = None
    next_state: str | None = None
    terms: dict | None = None

    def to_dict(self) -> dict:
        return {
            "draft_id": self.draft_id,
            "draft": {"text": self.draft.text, "intent": dict(self.draft.intent),
                      "phase": self.draft.phase},
            "verdict": self.verdict.to_dict(),
            "deliverable_text": self.deliverable_text,
            "kind": self.kind,
            "field_id": self.field_id,
            "next_state": self.next_state,
            "terms": self.terms,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PendingApproval":
        verdict = _verdict_from_dict(dict(raw["verdict"]))
        return cls(
            draft_id=raw["draft_id"],
            draft=DraftMessage(
                text=raw["draft"]["text"],
                intent=dict(raw["draft"]["intent"]),
                phase=raw["draft"]["phase"],
            ),
            verdict=verdict,
            deliverable_text=raw["deliverable_text"],
            kind=raw["kind"],
            field_id=raw.get("field_id"),
            next_state=raw.get("next_state"),
            terms=raw.get("terms"),
        )


def _verdict_from_dict(raw: dict) -> SafetyVerdict:
    from .safety import BindingHit, BoundaryHit

    return SafetyVerdict(
        safe=raw["safe"],
        requires_approval=raw["requires_approval"],
        binding_hits=tuple(
            BindingHit(phrase=h["phrase"], span=tuple(h["span"])) for h in raw["binding_hits"]
        ),
        boundary_hits=tuple(
            BoundaryHit(rule_id=h["rule_id"], detail=h["detail"], value=h.get("value"))
            for h in raw["boundary_hits"]
        ),
        rewritten_text=raw.get("rewritten_text"),
        rewrite_refused=raw.get("rewrite_refused", False),
    )


@dataclass
class SessionState:
    """All mutable state for one delegated conversation."""

    session_id: str
    config: DomainConfig
    state: ProtocolState = ProtocolState.START
    history: list[Message] = dataclass_field(default_factory=list)
    ledger: TciLedger = dataclass_field(default_factory=TciLedger)
    ledger_series: list[TciLedger] = dataclass_field(default_factory=list)
    feedback: FeedbackStore = dataclass_field(default_factory=FeedbackStore)
    pending_escalation: EscalationPayload | None = None
    pending_approval: PendingApproval | None = None
    round: int = 0
    rounds_since_progress: int = 0
    ambiguity_flags: list[str] = dataclass_field(default_factory=list)
    pending_ambiguities: list[str] = dataclass_field(default_factory=list)
    boundary_overrides: dict = dataclass_field(default_factory=dict)
    adversarial_flags: int = 0
    last_proposal: dict | None = None
    draft_seq: int = 0
    audit_seq: int = 0
    scenario: dict = dataclass_field(default_factory=dict)
    safety_events: list[dict] = dataclass_field(default_factory=list)
    last_question_field: str | None = None
    conflict_escalated_fields: list[str] = dataclass_field(default_factory=list)

    @property
    def closed(self) -> bool:
        return self.state.is_closed

    def effective_boundaries(self) -> tuple[BoundaryRule, ...]:
        rules = []
        for rule in self.config.boundaries:
            override = self.boundary_overrides.get(rule.rule_id)
            if override and rule.kind == BOUNDARY_NUMERIC_BAND:
                rules.append(
                    BoundaryRule(
                        rule_id=rule.rule_id,
                        kind=rule.kind,
                        field_id=rule.field_id,
                        min_value=override[0],
                        max_value=override[1],
                        unit=rule.unit,
                    )
                )
            else:
                rules.append(rule)
        return tuple(rules)


def format_quantity(value: float, unit: str | None) -> str:
    if unit == "USD":
        if value >= 1000 and value % 1000 == 0:
            return f"${value / 1000:g}K"
        return f"${value:,.0f}"
    if unit == "USD/hour":
        return f"${value:g}/hour"
    return f"{value:g}"


# --- delegate policy -------------------------------------------------------


class DelegatePolicy(Protocol):
    """Drafting seam. The engine owns legality; the policy owns wording."""

    def proposes_prematurely(self, session: SessionState) -> bool:
        ...

    def proposal(self, session: SessionState) -> DraftMessage:
        ...

    def counter(self, session: SessionState, field_id: str, value: float,
                unit: str | None) -> DraftMessage:
        ...

    def summary(self, session: SessionState, terms: dict) -> DraftMessage:
        ...

    def recap_no_deal(self, session: SessionState) -> DraftMessage:
        ...

    def clarifying_question(self, session: SessionState, field_id: str) -> DraftMessage:
        ...

    def ambiguity_question(self, session: SessionState, field_id: str) -> DraftMessage:
        ...

    def open_question(self, session: SessionState) -> DraftMessage:
        ...

    def deflection(self, session: SessionState, question: DraftMessage | None) -> DraftMessage:
        ...


class TemplatePolicy:
    """Deterministic default delegate: templated, hedged wording throughout,
    except the closing summary which deliberately uses commitment phrasing so
    the preflight rewrite-and-approve path is exercised on every deal."""

    def __init__(self, config: DomainConfig):
        self.config = config
        self._negotiation_rule = next(
            (r for r in config.boundaries if r.kind == BOUNDARY_NUMERIC_BAND), None
        )

    def negotiation_field(self) -> str | None:
        return self._negotiation_rule.field_id if self._negotiation_rule else None

    def proposes_prematurely(self, session: SessionState) -> bool:
        return False

    def proposal(self, session: SessionState) -> DraftMessage:
        rule = None
        if self._negotiation_rule is not None:
            for candidate in session.effective_boundaries():
                if candidate.rule_id == self._negotiation_rule.rule_id:
                    rule = candidate
                    break
        if rule is None:
            return DraftMessage(
                text="We're exploring options on terms, subject to approval.",
                intent={},
                phase=session.state.value,
            )
        low = rule.min_value + (rule.max_value - rule.min_value) / 2
        high = rule.max_value
        text = (
            f"Based on what you've shared, we're exploring "
            f"{format_quantity(low, rule.unit)}-{format_quantity(high, rule.unit)} "
            f"for {rule.field_id.replace('_', ' ')}, subject to approval."
        )
        return DraftMessage(
            text=text,
            intent={rule.field_id: {"value": high, "unit": rule.unit}},
            phase=session.state.value,
        )

    def counter(self, session: SessionState, field_id: str, value: float,
                unit: str | None) -> DraftMessage:
        text = (
            f"We can explore {format_quantity(value, unit)} for "
            f"{field_id.replace('_', ' ')}, subject to approval."
        )
        return DraftMessage(
            text=text,
            intent={field_id: {"value": value, "unit": unit}},
            phase=session.state.value,
        )

    def summary(self, session: SessionState, terms: dict) -> DraftMessage:
        parts = [
            f"{fid.replace('_', ' ')} at {format_quantity(t['value'], t.get('unit'))}"
            for fid, t in terms.items()
        ]
        if parts:
            text = "We agree to the terms: " + "; ".join(parts) + "."
        else:
            text = "We agree to the terms as discussed."
        return DraftMessage(
            text=text,
            intent={fid: {"value": t["value"], "unit": t.get("unit")} for fid, t in terms.items()},
            phase=session.state.value,
        )

    def recap_no_deal(self, session: SessionState) -> DraftMessage:
        return DraftMessage(
            text=(
                "To recap, we could not align on terms this time. "
                "Thank you for your time; we'll close the conversation here."
            ),
            intent={},
            phase=session.state.value,
        )

    def clarifying_question(self, session: SessionState, field_id: str) -> DraftMessage:
        schema = self.config.schema_for(field_id)
        return DraftMessage(text=schema.question, intent={}, phase=session.state.value)

    def ambiguity_question(self, session: SessionState, field_id: str) -> DraftMessage:
        revealed = session.ledger.revealed.get(field_id)
        prior_value = revealed.value if revealed else "your earlier answer"
        return DraftMessage(
            text=(
                f"Earlier you mentioned {field_id.replace('_', ' ')}: {prior_value}. "
                "Could you confirm whether that still holds?"
            ),
            intent={},
            phase=session.state.value,
        )

    def open_question(self, session: SessionState) -> DraftMessage:
        return DraftMessage(
            text=(
                "To get started, could you walk me through the key constraints "
                "and requirements on your side?"
            ),
            intent={},
            phase=session.state.value,
        )

    def deflection(self, session: SessionState, question: DraftMessage | None) -> DraftMessage:
        note = (
            "Some of what you've asked for is confidential; I can share "
            "approved materials instead."
        )
        if question is not None:
            return DraftMessage(
                text=f"{note} {question.text}", intent={}, phase=session.state.value
            )
        return DraftMessage(text=note, intent={}, phase=session.state.value)


class Critic(Protocol):
    """Optional tactical-suggestion source (plug point, no default model)."""

    def suggest(self, session: SessionState) -> list[FeedbackItem]:
        ...


@dataclass
class StepResult:
    session: SessionState
    actions: list


class Engine:
    """Drives sessions for one domain config. One logical writer per session;
    separate sessions may run concurrently."""

    def __init__(
        self,
        config: DomainConfig,
        policy: DelegatePolicy | None = None,
        critic: Critic | None = None,
        model_extractor: ModelExtractor | None = None,
        business_logic: Callable[[SessionState], bool] | None = None,
        audit_log: AuditLog | None = None,
        clock=None,
        preflight_enabled: bool = True,
        stcc_enabled: bool = True,
        rho: float = 1.0,
        moderator_tau: float = 0.7,
        context_budget_tokens: int = 4000,
    ):
        self.config = config
        self.policy = policy or TemplatePolicy(config)
        self.critic = critic
        self.model_extractor = model_extractor
        self.business_logic = business_logic or (lambda session: True)
        self.audit_log = audit_log or AuditLog()
        self.clock = clock or LogicalClock()
        self.preflight_enabled = preflight_enabled
        self.stcc_enabled = stcc_enabled
        self.rho = rho
        self.moderator_tau = moderator_tau
        self.context_budget_tokens = context_budget_tokens
        # Flag on fresh inbound evidence only, so one early probe does not
        # shadow an otherwise cooperative conversation.
        self._flag_moderator = LexiconModerator(config.lexicons, window=1)

    # -- session lifecycle --------------------------------------------------

    def init_session(self, session_id: str, scenario: dict | None = None) -> SessionState:
        session = SessionState(
            session_id=session_id, config=self.config, scenario=scenario or {}
        )
        self._audit(
            session,
            "transition",
            {"from": None, "to": ProtocolState.START.value},
            rationale="session created",
        )
        return session

    def step(self, session: SessionState, event) -> StepResult:
        actions: list = []
        if isinstance(event, SessionStart):
            self._handle_start(session, actions)
        elif isinstance(event, CounterpartyMessage):
            self._handle_counterparty(session, event, actions)
        elif isinstance(event, PrincipalFeedback):
            self._handle_feedback(session, event, actions)
        elif isinstance(event, PrincipalDecision):
            self._handle_decision(session, event, actions)
        elif isinstance(event, Timeout):
            self._handle_timeout(session, actions)
        else:
            raise IllegalEventError(f"unknown event {type(event).__name__}")
        self._check_invariants(session)
        return StepResult(session=session, actions=actions)

    # -- event handlers -----------------------------------------------------

    def _handle_start(self, session: SessionState, actions: list) -> None:
        if session.state is not ProtocolState.START:
            raise IllegalEventError("session already started")
        if self.stcc_enabled:
            belief = BeliefState.from_config(self.config)
            ranked = rank_attributes(self.config, belief, rho=self.rho)
            draft = None
            top_field = None
            send_options: tuple = ()
            if ranked:
                top = ranked[0]
                prompt = build_stcc_question(top)
                violations = validate_neutral_compliance(prompt, self.config.lexicons)
                if violations:
                    self._audit(
                        session,
                        "safety_event",
                        {
                            "subkind": "neutrality_violation",
                            "draft_text": prompt,
                            "violations": [v.to_dict() for v in violations],
                        },
                        rationale="opening question failed neutrality check",
                    )
                else:
                    options = list(top.options)
                    if top.include_escape:
                        options.append("Other/Not sure")
                    draft = DraftMessage(text=prompt, intent={}, phase=ProtocolState.STCC.value)
                    top_field = top.field_id
                    send_options = tuple(options)
            self._transition(session, ProtocolState.STCC, reason="session initiation")
            if draft is None:
                # Fallback: open-ended clarification when no safe banded
                # candidate exists.
                draft = self.policy.open_question(session)
                session.last_question_field = None
                self._deliver(session, draft, actions, kind="question", field_id=None)
            else:
                session.last_question_field = top_field
                self._deliver(
                    session, draft, actions, kind="question", field_id=top_field,
                    options=send_options,
                )
        else:
            self._transition(session, ProtocolState.SCREEN, reason="opening question disabled")
            draft = self.policy.open_question(session)
            session.last_question_field = None
            self._deliver(session, draft, actions, kind="question", field_id=None)

    def _handle_counterparty(
        self, session: SessionState, event: CounterpartyMessage, actions: list
    ) -> None:
        if session.state is ProtocolState.ESCALATE:
            raise IllegalEventError("session paused pending principal decision")
        if session.state.is_closed or session.state is ProtocolState.START:
            raise IllegalEventError(
                f"counterparty message not accepted in {session.state.value}"
            )
        if session.pending_approval is not None:
            raise IllegalEventError("awaiting principal approval of a held draft")

        message = Message(
            turn=len(session.history),
            speaker=SPEAKER_COUNTERPARTY,
            text=event.text,
            structured_values=dict(event.structured_values),
        )
        session.history.append(message)

        if self._hostility_hit(message):
            self._escalate_sentiment(session, message, actions)
            return
        if self._flag_adversarial(session, message):
            if session.adversarial_flags >= 2:
                self._escalate_adversarial(session, actions)
                return
            question = None
            if session.last_question_field is not None:
                question = self.policy.clarifying_question(
                    session, session.last_question_field
                )
            draft = self.policy.deflection(session, question)
            self._deliver(
                session, draft, actions, kind="deflection",
                field_id=session.last_question_field,
            )
            return

        self._update_ledger(session, message)

        if session.state in (ProtocolState.NEGOTIATE, ProtocolState.SUMMARIZE):
            violation = self._inbound_boundary_violation(session, message)
            if violation is not None:
                self._escalate_boundary(session, violation, actions)
                return

        if session.pending_ambiguities and session.state in (
            ProtocolState.SCREEN,
            ProtocolState.NEGOTIATE,
        ):
            field_id = session.pending_ambiguities.pop(0)
            if session.state is ProtocolState.NEGOTIATE:
                # Contradictory answers re-open screening for clarification.
                self._transition(
                    session, ProtocolState.SCREEN, reason=f"ambiguity on {field_id}"
                )
            draft = self.policy.ambiguity_question(session, field_id)
            session.last_question_field = field_id
            self._deliver(session, draft, actions, kind="question", field_id=field_id)
            return

        if session.state in (ProtocolState.STCC, ProtocolState.SCREEN):
            if is_stalled(session.ledger_series, self.config.stall_k):
                self._escalate_stall(session, actions)
                return

        if session.state is ProtocolState.STCC:
            self._transition(session, ProtocolState.SCREEN, reason="opening answer received")

        if session.state is ProtocolState.SCREEN:
            self._screen_turn(session, actions)
        elif session.state is ProtocolState.NEGOTIATE:
            self._negotiate_turn(session, message, actions)
        elif session.state is ProtocolState.SUMMARIZE:
            self._summarize_turn(session, message, actions)

    def _handle_feedback(
        self, session: SessionState, event: PrincipalFeedback, actions: list
    ) -> None:
        if session.state.is_closed:
            raise IllegalEventError("session is terminal; feedback not accepted")
        if not event.text.strip():
            raise ValueError("feedback text must be non-empty")
        item = FeedbackItem(
            item_id=session.feedback.next_id("human"),
            channel=CHANNEL_HUMAN,
            category=event.category,
            text=event.text,
            turn_created=session.round,
            constrains=event.constrains,
            directive=event.directive,
        )
        session.feedback.add(item)
        self._audit(
            session,
            "human_override",
            {"item": item.to_dict()},
            rationale="principal micro-feedback persisted verbatim",
        )

    def _handle_decision(
        self, session: SessionState, event: PrincipalDecision, actions: list
    ) -> None:
        if session.pending_escalation is not None:
            self.apply_principal_decision(session, event, actions)
        elif session.pending_approval is not None:
            self._apply_draft_decision(session, event, actions)
        else:
            raise IllegalEventError("no pending escalation or approval")

    def _handle_timeout(self, session: SessionState, actions: list) -> None:
        if session.state.is_closed:
            raise IllegalEventError("session is terminal")
        self._transition(session, ProtocolState.STALL, reason="timeout/inactivity")
        self._finish(session, actions, outcome=ProtocolState.STALL, terms=None)

    # -- principal decisions ------------------------------------------------

    def apply_principal_decision(
        self, session: SessionState, decision: PrincipalDecision, actions: list | None = None
    ) -> list:
        """Resolve a pending escalation with an approve/decline/guidance call."""
        if actions is None:
            actions = []
        if session.pending_escalation is None:
            raise IllegalEventError("no pending escalation")
        payload = session.pending_escalation

        if decision.kind == DECISION_APPROVE_OPTION:
            if decision.option_id is None:
                raise UnknownOptionError("approve decision needs an option id")
            try:
                option = payload.option(decision.option_id)
            except KeyError:
                raise UnknownOptionError(
                    f"option {decision.option_id!r} not in payload"
                ) from None
            self._audit(
                session,
                "principal_decision",
                {
                    "decision": decision.kind,
                    "option_id": option.option_id,
                    "effect": dict(option.effect),
                },
                rationale=option.label,
            )
            self._apply_option_effect(session, payload, option, actions)
        elif decision.kind == DECISION_DECLINE:
            self._audit(
                session, "principal_decision", {"decision": decision.kind},
                rationale="principal declined",
            )
            session.pending_escalation = None
            session.pending_approval = None
            self._transition(session, ProtocolState.NO_DEAL, reason="principal declined")
            self._finish(session, actions, outcome=ProtocolState.NO_DEAL, terms=None)
        elif decision.kind == DECISION_GUIDANCE:
            if not decision.guidance or not decision.guidance.strip():
                raise ValueError("guidance decision needs text")
            self._audit(
                session, "principal_decision",
                {"decision": decision.kind, "guidance": decision.guidance},
                rationale="guidance supplied",
            )
            item = FeedbackItem(
                item_id=session.feedback.next_id("human"),
                channel=CHANNEL_HUMAN,
                category="constraint",
                text=decision.guidance,
                turn_created=session.round,
            )
            session.feedback.add(item)
            self._audit(session, "human_override", {"item": item.to_dict()},
                        rationale="guidance persisted as human directive")
            self._resume(session, payload, actions)
        else:
            raise IllegalEventError(
                f"decision kind {decision.kind!r} not valid for an escalation"
            )
        return actions

    def _apply_option_effect(
        self,
        session: SessionState,
        payload: EscalationPayload,
        option: EscalationOption,
        actions: list,
    ) -> None:
        effect = option.effect
        kind = effect.get("kind")
        if kind == "counter_at":
            directive = FeedbackItem(
                item_id=session.feedback.next_id("human"),
                channel=CHANNEL_HUMAN,
                category="constraint",
                text=f"Approved: {option.label}",
                turn_created=session.round,
                constrains=effect.get("field"),
                directive=str(effect.get("value")),
            )
            session.feedback.add(directive)
            self._resume(session, payload, actions, deliver=False)
            draft = self.policy.counter(
                session, effect["field"], float(effect["value"]), effect.get("unit")
            )
            session.last_proposal = {
                "field": effect["field"],
                "value": float(effect["value"]),
                "unit": effect.get("unit"),
            }
            self._deliver(session, draft, actions, kind="counter")
        elif kind == "adjust_boundary":
            session.boundary_overrides[effect["rule_id"]] = (
                float(effect["min"]),
                float(effect["max"]),
            )
            directive = FeedbackItem(
                item_id=session.feedback.next_id("human"),
                channel=CHANNEL_HUMAN,
                category="constraint",
                text=(
                    f"Approved band now "
                    f"[{format_quantity(float(effect['min']), effect.get('unit'))}, "
                    f"{format_quantity(float(effect['max']), effect.get('unit'))}]"
                ),
                turn_created=session.round,
                constrains=effect.get("field"),
                directive=str(effect.get("max")),
            )
            session.feedback.add(directive)
            self._resume(session, payload, actions, deliver=False)
            value = float(effect.get("value", effect["max"]))
            draft = self.policy.counter(session, effect["field"], value, effect.get("unit"))
            session.last_proposal = {
                "field": effect["field"], "value": value, "unit": effect.get("unit"),
            }
            self._deliver(session, draft, actions, kind="counter")
        elif kind == "decline_terminal":
            session.pending_escalation = None
            session.pending_approval = None
            self._transition(session, ProtocolState.NO_DEAL, reason=option.label)
            self._finish(session, actions, outcome=ProtocolState.NO_DEAL, terms=None)
        elif kind == "resume_screen":
            session.pending_escalation = None
            self._transition(session, ProtocolState.SCREEN, reason=option.label)
            field_id = session.ledger.missing[0] if session.ledger.missing else None
            if field_id is not None:
                draft = self.policy.clarifying_question(session, field_id)
                session.last_question_field = field_id
                self._deliver(session, draft, actions, kind="question", field_id=field_id)
        elif kind == "send_original":
            session.pending_escalation = None
            held = session.pending_approval
            resume = ProtocolState(payload.resume_state)
            self._transition(session, resume, reason=option.label)
            if held is not None:
                session.pending_approval = None
                self._deliver_approved(session, held, actions, approved_by_seq=session.audit_seq)
        else:
            self._resume(session, payload, actions)

    def _resume(
        self,
        session: SessionState,
        payload: EscalationPayload,
        actions: list,
        deliver: bool = True,
    ) -> None:
        session.pending_escalation = None
        session.pending_approval = None
        resume = ProtocolState(payload.resume_state or ProtocolState.SCREEN.value)
        self._transition(session, resume, reason="escalation resolved; flow resumed")
        if not deliver:
            return
        if resume is ProtocolState.SCREEN and session.ledger.missing:
            field_id = session.ledger.missing[0]
            draft = self.policy.clarifying_question(session, field_id)
            session.last_question_field = field_id
            self._deliver(session, draft, actions, kind="question", field_id=field_id)
        elif resume is ProtocolState.NEGOTIATE:
            draft = self.policy.proposal(session)
            self._remember_proposal(session, draft)
            self._deliver(session, draft, actions, kind="proposal")

    def _apply_draft_decision(
        self, session: SessionState, decision: PrincipalDecision, actions: list
    ) -> None:
        held = session.pending_approval
        assert held is not None
        if decision.kind == DECISION_APPROVE_DRAFT:
            self._audit(
                session,
                "principal_decision",
                {"decision": decision.kind, "draft_id": held.draft_id},
                rationale="draft approved for delivery",
            )
            session.pending_approval = None
            self._deliver_approved(session, held, actions, approved_by_seq=session.audit_seq)
        elif decision.kind == DECISION_REJECT_DRAFT:
            self._audit(
                session,
                "principal_decision",
                {"decision": decision.kind, "draft_id": held.draft_id},
                rationale="draft rejected",
            )
            session.pending_approval = None
            self._transition(session, ProtocolState.NO_DEAL, reason="principal rejected draft")
            self._finish(session, actions, outcome=ProtocolState.NO_DEAL, terms=None)
        else:
            raise IllegalEventError(
                f"decision kind {decision.kind!r} not valid for a held draft"
            )

    # -- phase logic ---------------------------------------------------------

    def _screen_turn(self, session: SessionState, actions: list) -> None:
        gate_met = session.ledger.tci_weighted >= self.config.tau_gate
        if self.policy.proposes_prematurely(session) and not gate_met:
            try:
                self._assert_gate(session)
            except InvariantViolation as exc:
                self._audit(
                    session,
                    "safety_event",
                    {"subkind": "gate_rejection", "invariant": "I1", "detail": str(exc)},
                    rationale="premature proposal rejected; asking instead",
                )
        if gate_met and self.business_logic(session):
            self._assert_gate(session)
            self._transition(
                session,
                ProtocolState.NEGOTIATE,
                reason=(
                    f"information gate met: tci={session.ledger.tci:.4f} "
                    f"tci_weighted={session.ledger.tci_weighted:.4f} "
                    f">= tau_gate={self.config.tau_gate}"
                ),
            )
            self._merge_feedback(session, actions)
            if session.state is not ProtocolState.NEGOTIATE:
                return  # merge escalated
            draft = self.policy.proposal(session)
            self._remember_proposal(session, draft)
            self._deliver(session, draft, actions, kind="proposal")
            return
        missing = [f for f in session.ledger.missing]
        if not missing:
            # Everything known but gate unmet can only happen with weighted
            # gating and zero-weight anomalies; ask an open follow-up.
            draft = self.policy.open_question(session)
            session.last_question_field = None
            self._deliver(session, draft, actions, kind="question")
            return
        self._merge_feedback(session, actions)
        if session.state is not ProtocolState.SCREEN:
            return
        field_id = missing[0]
        draft = self.policy.clarifying_question(session, field_id)
        session.last_question_field = field_id
        self._deliver(session, draft, actions, kind="question", field_id=field_id)

    def _negotiate_turn(
        self, session: SessionState, message: Message, actions: list
    ) -> None:
        values = message.structured_values
        accepted = bool(values.get("accept")) or self._acceptance_hit(message)
        declined = bool(values.get("decline"))
        in_band_counter = self._in_band_counter(session, message)

        if session.round >= self.config.max_rounds - 2 and not (accepted or declined):
            # Late-session forcing keeps liveness: wrap up rather than loop.
            declined = True

        if accepted or in_band_counter is not None:
            if in_band_counter is not None:
                terms_value = in_band_counter
            elif session.last_proposal is not None:
                terms_value = session.last_proposal
            else:
                terms_value = None
            self._transition(
                session, ProtocolState.SUMMARIZE, reason="agreement conditions approach"
            )
            terms = {}
            if terms_value is not None:
                terms = {
                    terms_value["field"]: {
                        "value": terms_value["value"],
                        "unit": terms_value.get("unit"),
                    }
                }
            draft = self.policy.summary(session, terms)
            self._deliver(
                session, draft, actions, kind="summary",
                next_state=ProtocolState.AGREE.value, terms=terms,
            )
            return
        if declined:
            self._transition(session, ProtocolState.SUMMARIZE, reason="impasse detected")
            draft = self.policy.recap_no_deal(session)
            self._deliver(
                session, draft, actions, kind="recap",
                next_state=ProtocolState.NO_DEAL.value,
            )
            return
        self._merge_feedback(session, actions)
        if session.state is not ProtocolState.NEGOTIATE:
            return
        if session.ledger.missing:
            field_id = session.ledger.missing[0]
            draft = self.policy.clarifying_question(session, field_id)
            session.last_question_field = field_id
            self._deliver(session, draft, actions, kind="question", field_id=field_id)
        else:
            draft = self.policy.proposal(session)
            self._remember_proposal(session, draft)
            self._deliver(session, draft, actions, kind="proposal")

    def _summarize_turn(
        self, session: SessionState, message: Message, actions: list
    ) -> None:
        if bool(message.structured_values.get("decline")):
            self._transition(session, ProtocolState.NO_DEAL, reason="impasse confirmed")
            self._finish(session, actions, outcome=ProtocolState.NO_DEAL, terms=None)
            return
        # Nothing to do until the held summary is decided; acknowledge nothing.

    # -- escalation builders --------------------------------------------------

    def _escalate(
        self,
        session: SessionState,
        trigger: str,
        options: Sequence[EscalationOption],
        boundary_at_risk: str,
        actions: list,
    ) -> None:
        payload = build_escalation_payload(
            session,
            trigger,
            options,
            boundary_at_risk=boundary_at_risk,
            safety_events=session.safety_events[-3:],
        )
        session.pending_escalation = payload
        self._transition(session, ProtocolState.ESCALATE, reason=trigger)
        self._audit(
            session, "escalation", {"payload": payload.to_dict()}, rationale=trigger
        )
        actions.append(NotifyPrincipal(notice="escalation", detail=payload.to_dict()))

    def _escalate_boundary(
        self, session: SessionState, violation: dict, actions: list
    ) -> None:
        rule: BoundaryRule = violation["rule"]
        requested = violation["value"]
        unit = rule.unit
        top = rule.max_value
        delta = (
            f"Counterparty requests {format_quantity(requested, unit)}, approved band "
            f"{format_quantity(rule.min_value, unit)}-{format_quantity(top, unit)}"
        )
        verb = "increase" if requested > top else "adjustment"
        options = (
            EscalationOption(
                option_id="A",
                label=f"Counter at {format_quantity(top, unit)} (top of approved band)",
                tradeoff="Risk the counterparty declines.",
                effect={
                    "kind": "counter_at",
                    "field": rule.field_id,
                    "value": top,
                    "unit": unit,
                    "rule_id": rule.rule_id,
                },
            ),
            EscalationOption(
                option_id="B",
                label=f"Request budget {verb} to {format_quantity(requested, unit)}",
                tradeoff="Requires executive approval.",
                effect={
                    "kind": "adjust_boundary",
                    "rule_id": rule.rule_id,
                    "field": rule.field_id,
                    "min": min(rule.min_value, requested),
                    "max": max(rule.max_value, requested),
                    "value": requested,
                    "unit": unit,
                },
            ),
            EscalationOption(
                option_id="C",
                label="Decline and continue the search",
                tradeoff="Delays the outcome.",
                effect={"kind": "decline_terminal"},
            ),
        )
        self._record_safety_event(
            session,
            {
                "subkind": "boundary_hit",
                "rule_id": rule.rule_id,
                "value": requested,
                "detail": delta,
            },
            rationale="inbound request outside authorization",
        )
        self._escalate(session, TRIGGER_BOUNDARY, options, delta, actions)

    def _escalate_stall(self, session: SessionState, actions: list) -> None:
        options = (
            EscalationOption(
                option_id="A",
                label="Re-enter screening with a targeted clarification",
                tradeoff="Costs another round; may recover progress.",
                effect={"kind": "resume_screen"},
            ),
            EscalationOption(
                option_id="B",
                label="End the conversation",
                tradeoff="No deal from this counterparty.",
                effect={"kind": "decline_terminal"},
            ),
        )
        boundary = (
            f"No new information for {self.config.stall_k} rounds; "
            f"TCI stuck at {session.ledger.tci:.4f}"
        )
        self._escalate(session, TRIGGER_AMBIGUITY, options, boundary, actions)

    def _escalate_adversarial(self, session: SessionState, actions: list) -> None:
        options = (
            EscalationOption(
                option_id="A",
                label="Continue cautiously with guidance",
                tradeoff="Keeps the conversation alive under supervision.",
                effect={"kind": "resume_screen"},
            ),
            EscalationOption(
                option_id="B",
                label="End the conversation",
                tradeoff="Drops a possibly adversarial counterparty.",
                effect={"kind": "decline_terminal"},
            ),
        )
        self._escalate(
            session,
            TRIGGER_ADVERSARIAL,
            options,
            "Repeated adversarial signals from the counterparty",
            actions,
        )

    def _escalate_sentiment(
        self, session: SessionState, message: Message, actions: list
    ) -> None:
        self._record_safety_event(
            session,
            {"subkind": "hostility", "text": message.text},
            rationale="hostile phrasing detected",
        )
        options = (
            EscalationOption(
                option_id="A",
                label="Continue with de-escalation guidance",
                tradeoff="May recover the conversation.",
                effect={"kind": "resume_screen"},
            ),
            EscalationOption(
                option_id="B",
                label="End the conversation",
                tradeoff="No deal from this counterparty.",
                effect={"kind": "decline_terminal"},
            ),
        )
        self._escalate(
            session,
            TRIGGER_SENTIMENT,
            options,
            "Negative sentiment detected in the last counterparty message",
            actions,
        )

    def _escalate_budget(self, session: SessionState, actions: list) -> None:
        options = (
            EscalationOption(
                option_id="A",
                label="Continue with trimmed context",
                tradeoff="Critic suggestions are dropped for now.",
                effect={"kind": "resume"},
            ),
            EscalationOption(
                option_id="B",
                label="End the conversation",
                tradeoff="No deal from this counterparty.",
                effect={"kind": "decline_terminal"},
            ),
        )
        self._escalate(
            session,
            TRIGGER_BUDGET,
            options,
            "Context budget cannot hold mandatory human and safety items",
            actions,
        )

    def _escalate_conflict(self, session: SessionState, fields: list, actions: list) -> None:
        options = (
            EscalationOption(
                option_id="A",
                label="Affirm the human directive",
                tradeoff="Critic suggestions on this point stay ignored.",
                effect={"kind": "resume"},
            ),
            EscalationOption(
                option_id="B",
                label="End the conversation",
                tradeoff="No deal from this counterparty.",
                effect={"kind": "decline_terminal"},
            ),
        )
        self._escalate(
            session,
            TRIGGER_CONFLICT,
            options,
            f"Repeated human-vs-critic conflict on: {', '.join(fields)}",
            actions,
        )

    # -- shared machinery -----------------------------------------------------

    def _merge_feedback(self, session: SessionState, actions: list) -> None:
        if self.critic is not None:
            for item in self.critic.suggest(session):
                session.feedback.add(item)
        store = session.feedback
        critic_items = store.by_channel(CHANNEL_CRITIC)
        human_items = store.by_channel(CHANNEL_HUMAN)
        safety_items = store.by_channel(CHANNEL_SAFETY)
        if not (critic_items or human_items or safety_items):
            return
        decay_stale(store.items, session.round)
        gate_met = session.ledger.tci_weighted >= self.config.tau_gate
        try:
            plan = merge_channels(
                critic=critic_items,
                human=human_items,
                safety=safety_items,
                budget_tokens=self.context_budget_tokens,
                tci_gate_met=gate_met,
            )
        except BudgetStarvationError:
            self._escalate_budget(session, actions)
            return
        if critic_items or plan.conflicts_resolved:
            self._audit(
                session,
                "critic_suggestion",
                {"plan": plan.to_dict()},
                rationale="channels merged for next turn",
            )
        store.record_human_critic_conflicts(plan.conflicts_resolved, session.round)
        repeated = [
            f for f in store.repeated_conflict_fields()
            if f not in session.conflict_escalated_fields
        ]
        if repeated:
            session.conflict_escalated_fields.extend(repeated)
            self._escalate_conflict(session, repeated, actions)

    def _update_ledger(self, session: SessionState, message: Message) -> None:
        prior = session.ledger if session.ledger_series else None
        ledger = compute_tci(
            session.history, self.config, prior=prior, model=self.model_extractor
        )
        previous_count = session.ledger.revealed_count if session.ledger_series else 0
        session.ledger = ledger
        session.ledger_series.append(ledger)
        newly = sorted(set(ledger.revealed) - set(
            session.ledger_series[-2].revealed if len(session.ledger_series) > 1 else ()
        ))
        if ledger.revealed_count > previous_count:
            session.rounds_since_progress = 0
        else:
            session.rounds_since_progress += 1
        for flagged in ledger.ambiguities:
            if flagged not in session.ambiguity_flags:
                session.ambiguity_flags.append(flagged)
                session.pending_ambiguities.append(flagged)
        self._audit(
            session,
            "tci_update",
            {
                "turn": message.turn,
                "state": session.state.value,
                "tci": ledger.tci,
                "tci_weighted": ledger.tci_weighted,
                "revealed_count": ledger.revealed_count,
                "required_count": len(self.config.required_fields),
                "newly_revealed": newly,
                "missing": list(ledger.missing),
                "ambiguities": list(ledger.ambiguities),
            },
            rationale="ledger recomputed from transcript",
        )

    def _inbound_boundary_violation(
        self, session: SessionState, message: Message
    ) -> dict | None:
        rules = [
            r for r in session.effective_boundaries() if r.kind == BOUNDARY_NUMERIC_BAND
        ]
        for rule in rules:
            raw = message.structured_values.get(rule.field_id)
            if isinstance(raw, (int, float)) and not isinstance(raw, bool):
                if not (rule.min_value <= float(raw) <= rule.max_value):
                    return {"rule": rule, "value": float(raw)}
        from .safety import scan_currency_values

        for value, unit in scan_currency_values(message.text):
            for rule in rules:
                if rule.unit is not None and rule.unit != unit:
                    continue
                if not (rule.min_value <= value <= rule.max_value):
                    return {"rule": rule, "value": value}
        return None

    def _in_band_counter(self, session: SessionState, message: Message) -> dict | None:
        rules = [
            r for r in session.effective_boundaries() if r.kind == BOUNDARY_NUMERIC_BAND
        ]
        for rule in rules:
            raw = message.structured_values.get(rule.field_id)
            if isinstance(raw, (int, float)) and not isinstance(raw, bool):
                value = float(raw)
                if rule.min_value <= value <= rule.max_value:
                    proposed = (session.last_proposal or {}).get("value")
                    if proposed is None or value != proposed:
                        return {"field": rule.field_id, "value": value, "unit": rule.unit}
        return None

    def _acceptance_hit(self, message: Message) -> bool:
        text = " ".join(message.text.lower().split())
        return any(
            phrase in text
            for phrase in ("works for me", "that works", "i accept", "sounds good, let's")
        )

    def _hostility_hit(self, message: Message) -> bool:
        text = " ".join(message.text.lower().split())
        return any(p.lower() in text for p in self.config.lexicons.hostility)

    def _flag_adversarial(self, session: SessionState, message: Message) -> bool:
        label, confidence = self._flag_moderator.classify([message], sorted(REQUIRED_LABELS))
        if label == LABEL_ADVERSARIAL and confidence >= self.moderator_tau:
            session.adversarial_flags += 1
            self._record_safety_event(
                session,
                {
                    "subkind": "moderator_flag",
                    "label": label,
                    "confidence": confidence,
                    "text": message.text,
                },
                rationale="possible social engineering",
            )
            return True
        return False

    def _assert_gate(self, session: SessionState) -> None:
        if session.ledger.tci_weighted < self.config.tau_gate:
            raise InvariantViolation(
                f"I1 (no premature bargaining): tci_weighted "
                f"{session.ledger.tci_weighted:.4f} < tau_gate {self.config.tau_gate}"
            )

    def _remember_proposal(self, session: SessionState, draft: DraftMessage) -> None:
        for field_id, raw in draft.intent.items():
            if isinstance(raw, dict) and "value" in raw:
                session.last_proposal = {
                    "field": field_id,
                    "value": float(raw["value"]),
                    "unit": raw.get("unit"),
                }
                return

    def _deliver(
        self,
        session: SessionState,
        draft: DraftMessage,
        actions: list,
        kind: str,
        field_id: str | None = None,
        options: tuple = (),
        next_state: str | None = None,
        terms: dict | None = None,
    ) -> None:
        """Preflight and either deliver a draft or hold it for approval."""
        if session.round >= self.config.max_rounds:
            self._transition(session, ProtocolState.STALL, reason="round limit reached")
            self._finish(session, actions, outcome=ProtocolState.STALL, terms=None)
            return
        session.draft_seq += 1
        draft_id = f"d{session.draft_seq}"
        if self.preflight_enabled:
            verdict = preflight(draft, session.effective_boundaries(), self.config.lexicons)
        else:
            verdict = SafetyVerdict(safe=True, requires_approval=False)

        if verdict.safe:
            self._record_safety_event(
                session,
                {
                    "subkind": "preflight",
                    "draft_id": draft_id,
                    "delivered": True,
                    "target": SPEAKER_COUNTERPARTY,
                    "text": draft.text,
                    "intent": _intent_payload(draft.intent),
                    "verdict": verdict.to_dict(),
                    "approved_by_seq": None,
                },
                rationale="clean preflight; delivered",
            )
            self._send(session, draft.text, actions, kind, field_id, options, draft.intent)
            if next_state == ProtocolState.AGREE.value:
                self._transition(session, ProtocolState.AGREE, reason="terms aligned")
                self._finish(session, actions, outcome=ProtocolState.AGREE, terms=terms)
            elif next_state == ProtocolState.NO_DEAL.value:
                self._transition(session, ProtocolState.NO_DEAL, reason="impasse confirmed")
                self._finish(session, actions, outcome=ProtocolState.NO_DEAL, terms=None)
            return

        if verdict.rewrite_refused:
            self._record_safety_event(
                session,
                {
                    "subkind": "preflight",
                    "draft_id": draft_id,
                    "delivered": False,
                    "target": SPEAKER_COUNTERPARTY,
                    "text": draft.text,
                    "intent": _intent_payload(draft.intent),
                    "verdict": verdict.to_dict(),
                    "approved_by_seq": None,
                },
                rationale="binding phrase without rewrite template; escalation mandatory",
            )
            session.pending_approval = PendingApproval(
                draft_id=draft_id,
                draft=draft,
                verdict=verdict,
                deliverable_text=draft.text,
                kind=kind,
                field_id=field_id,
                next_state=next_state,
                terms=terms,
            )
            hit = verdict.binding_hits[0].phrase if verdict.binding_hits else "<unknown>"
            options_b = (
                EscalationOption(
                    option_id="A",
                    label="Approve sending the draft as written",
                    tradeoff="Creates commitment exposure.",
                    effect={"kind": "send_original"},
                ),
                EscalationOption(
                    option_id="B",
                    label="Withhold the draft and end the conversation",
                    tradeoff="No deal from this counterparty.",
                    effect={"kind": "decline_terminal"},
                ),
            )
            self._escalate(
                session,
                TRIGGER_BOUNDARY,
                options_b,
                f"Draft contains binding phrase {hit!r} with no configured rewrite",
                actions,
            )
            return

        deliverable = verdict.rewritten_text if (
            verdict.rewritten_text is not None and not verdict.boundary_hits
        ) else draft.text
        self._record_safety_event(
            session,
            {
                "subkind": "preflight",
                "draft_id": draft_id,
                "delivered": False,
                "target": SPEAKER_COUNTERPARTY,
                "text": draft.text,
                "intent": _intent_payload(draft.intent),
                "verdict": verdict.to_dict(),
                "approved_by_seq": None,
            },
            rationale="draft held for principal approval",
        )
        session.pending_approval = PendingApproval(
            draft_id=draft_id,
            draft=draft,
            verdict=verdict,
            deliverable_text=deliverable,
            kind=kind,
            field_id=field_id,
            next_state=next_state,
            terms=terms,
        )
        actions.append(
            NotifyPrincipal(
                notice="approval",
                detail={
                    "draft_id": draft_id,
                    "original_text": draft.text,
                    "deliverable_text": deliverable,
                    "verdict": verdict.to_dict(),
                },
            )
        )

    def _deliver_approved(
        self, session: SessionState, held: PendingApproval, actions: list,
        approved_by_seq: int,
    ) -> None:
        self._record_safety_event(
            session,
            {
                "subkind": "preflight",
                "draft_id": held.draft_id,
                "delivered": True,
                "target": SPEAKER_COUNTERPARTY,
                "text": held.deliverable_text,
                "intent": _intent_payload(held.draft.intent),
                "verdict": held.verdict.to_dict(),
                "approved_by_seq": approved_by_seq,
            },
            rationale="delivered after principal approval",
        )
        self._send(
            session, held.deliverable_text, actions, held.kind, held.field_id, (),
            held.draft.intent,
        )
        if held.next_state == ProtocolState.AGREE.value:
            self._transition(session, ProtocolState.AGREE, reason="terms aligned")
            self._finish(session, actions, outcome=ProtocolState.AGREE, terms=held.terms)
        elif held.next_state == ProtocolState.NO_DEAL.value:
            self._transition(session, ProtocolState.NO_DEAL, reason="impasse confirmed")
            self._finish(session, actions, outcome=ProtocolState.NO_DEAL, terms=None)

    def _send(
        self,
        session: SessionState,
        text: str,
        actions: list,
        kind: str,
        field_id: str | None,
        options: tuple,
        intent: dict,
    ) -> None:
        session.history.append(
            Message(turn=len(session.history), speaker=SPEAKER_DELEGATE, text=text)
        )
        session.round += 1
        actions.append(
            SendMessage(
                target=SPEAKER_COUNTERPARTY,
                text=text,
                kind=kind,
                field_id=field_id,
                options=tuple(options),
                proposed=_intent_payload(intent) or None,
            )
        )

    def _finish(
        self,
        session: SessionState,
        actions: list,
        outcome: ProtocolState,
        terms: dict | None,
    ) -> None:
        self._audit(
            session,
            "outcome",
            {
                "outcome": outcome.value,
                "terms": terms,
                "round": session.round,
                "tci": session.ledger.tci,
                "tci_weighted": session.ledger.tci_weighted,
            },
            rationale="session reached a terminal state",
        )
        actions.append(SessionEnded(outcome=outcome.value, terms=terms))

    def _transition(
        self, session: SessionState, target: ProtocolState, reason: str
    ) -> None:
        if session.state.is_closed:
            raise InvariantViolation(
                f"no transitions out of terminal state {session.state.value}"
            )
        if target is ProtocolState.NEGOTIATE and session.state is ProtocolState.SCREEN:
            self._assert_gate(session)
        payload = {
            "from": session.state.value,
            "to": target.value,
            "tci": session.ledger.tci,
            "tci_weighted": session.ledger.tci_weighted,
            "round": session.round,
        }
        session.state = target
        self._audit(session, "transition", payload, rationale=reason)

    def _record_safety_event(
        self, session: SessionState, payload: dict, rationale: str
    ) -> None:
        session.safety_events.append(payload)
        self._audit(session, "safety_event", payload, rationale=rationale)

    def _audit(
        self, session: SessionState, kind: str, payload: dict, rationale: str = ""
    ) -> None:
        session.audit_seq += 1
        event = AuditEvent(
            seq=session.audit_seq,
            timestamp=self.clock.stamp(session.audit_seq),
            session_id=session.session_id,
            kind=kind,
            payload=payload,
            rationale=rationale,
        )
        self.audit_log.append(event)

    def _check_invariants(self, session: SessionState) -> None:
        if session.round > self.config.max_rounds:
            raise InvariantViolation(
                f"round {session.round} exceeds max_rounds {self.config.max_rounds}"
            )
        has_pending = session.pending_escalation is not None
        if has_pending != (session.state is ProtocolState.ESCALATE):
            raise InvariantViolation(
                "pending escalation must exist exactly when state is ESCALATE"
            )

    # -- persistence ----------------------------------------------------------

    def snapshot(self, session: SessionState) -> str:
        """Serialize a session to a self-contained, integrity-checked document."""
        body = {
            "format_version": 1,
            "config": self.config.to_dict(),
            "session": {
                "session_id": session.session_id,
                "state": session.state.value,
                "history": [m.to_dict() for m in session.history],
                "ledger": session.ledger.to_dict(),
                "ledger_series": [ledger.to_dict() for ledger in session.ledger_series],
                "feedback": session.feedback.to_dict(),
                "pending_escalation": (
                    session.pending_escalation.to_dict()
                    if session.pending_escalation
                    else None
                ),
                "pending_approval": (
                    session.pending_approval.to_dict() if session.pending_approval else None
                ),
                "round": session.round,
                "rounds_since_progress": session.rounds_since_progress,
                "ambiguity_flags": list(session.ambiguity_flags),
                "pending_ambiguities": list(session.pending_ambiguities),
                "boundary_overrides": {
                    rid: list(bounds) for rid, bounds in session.boundary_overrides.items()
                },
                "adversarial_flags": session.adversarial_flags,
                "last_proposal": session.last_proposal,
                "draft_seq": session.draft_seq,
                "audit_seq": session.audit_seq,
                "scenario": dict(session.scenario),
                "safety_events": [dict(e) for e in session.safety_events],
                "last_question_field": session.last_question_field,
                "conflict_escalated_fields": list(session.conflict_escalated_fields),
                "audit_events": [
                    e.to_dict() for e in self.audit_log.events(session.session_id)
                ],
            },
        }
        canonical = json.dumps(body, sort_keys=True)
        checksum = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
        return json.dumps({"body": body, "sha256": checksum}, sort_keys=True)

    def restore(self, document: str) -> SessionState:
        """Rebuild a session from ``snapshot`` output; refuses corrupt input."""
        try:
            wrapper = json.loads(document)
            body = wrapper["body"]
            stored = wrapper["sha256"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise IntegrityError(f"snapshot unreadable: {exc}") from exc
        canonical = json.dumps(body, sort_keys=True)
        actual = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
        if actual != stored:
            raise IntegrityError("snapshot checksum mismatch")
        raw = body["session"]
        config = load_domain_config(body["config"])
        if config.to_dict() != self.config.to_dict():
            raise IntegrityError("snapshot belongs to a different domain config")
        session = SessionState(session_id=raw["session_id"], config=self.config)
        session.state = ProtocolState(raw["state"])
        session.history = [Message.from_dict(m) for m in raw["history"]]
        session.ledger = TciLedger.from_dict(raw["ledger"])
        session.ledger_series = [TciLedger.from_dict(l) for l in raw["ledger_series"]]
        session.feedback = FeedbackStore.from_dict(raw["feedback"])
        session.pending_escalation = (
            EscalationPayload.from_dict(raw["pending_escalation"])
            if raw["pending_escalation"]
            else None
        )
        session.pending_approval = (
            PendingApproval.from_dict(raw["pending_approval"])
            if raw["pending_approval"]
            else None
        )
        session.round = raw["round"]
        session.rounds_since_progress = raw["rounds_since_progress"]
        session.ambiguity_flags = list(raw["ambiguity_flags"])
        session.pending_ambiguities = list(raw["pending_ambiguities"])
        session.boundary_overrides = {
            rid: tuple(bounds) for rid, bounds in raw["boundary_overrides"].items()
        }
        session.adversarial_flags = raw["adversarial_flags"]
        session.last_proposal = raw["last_proposal"]
        session.draft_seq = raw["draft_seq"]
        session.audit_seq = raw["audit_seq"]
        session.scenario = dict(raw["scenario"])
        session.safety_events = [dict(e) for e in raw["safety_events"]]
        session.last_question_field = raw["last_question_field"]
        session.conflict_escalated_fields = list(raw["conflict_escalated_fields"])
        for event_raw in raw["audit_events"]:
            event = AuditEvent.from_dict(event_raw)
            if not self.audit_log.events(session.session_id, from_seq=event.seq):
                self.audit_log.append(event)
        return session


def _intent_payload(intent: dict) -> dict:
    payload = {}
    for field_id, raw in intent.items():
        if isinstance(raw, dict):
            payload[field_id] = dict(raw)
        else:
            payload[field_id] = raw
    return payload
