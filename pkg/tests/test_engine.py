import json

import pytest

from agentgate.engine import (
    AuditLog,
    CounterpartyMessage,
    Engine,
    IllegalEventError,
    IntegrityError,
    InvariantViolation,
    NotifyPrincipal,
    PrincipalDecision,
    PrincipalFeedback,
    ProtocolState,
    SendMessage,
    SessionStart,
    TemplatePolicy,
    Timeout,
    UnknownOptionError,
)
from agentgate.feedback import CHANNEL_CRITIC, CHANNEL_HUMAN, FeedbackItem

WALKTHROUGH_REPLIES = {
    "work_auth": ("Work authorization is the big one - I need H-1B sponsorship.", {}),
    "timezone": ("I can cover 6 hours of overlap with US Pacific.", {}),
    "skills": ("I've worked mostly in Python and React.", {}),
    "seniority": ("I have 8 years of experience in senior roles.", {}),
    "compensation": ("Targeting the 90 to 110 range.", {"compensation": "$90K-$110K"}),
    "start_date": ("I could start in January.", {"start_date": "January"}),
    "contract_type": ("I'm looking for a permanent role.", {}),
    "location": ("Remote works best for me.", {}),
}


def start_engine(config, **kwargs):
    engine = Engine(config, **kwargs)
    session = engine.init_session("t-1")
    actions = engine.step(session, SessionStart()).actions
    return engine, session, actions


def last_send(actions):
    sends = [a for a in actions if isinstance(a, SendMessage)]
    return sends[-1] if sends else None


def drive_to_negotiate(engine, session, actions):
    """Answer the delegate's questions until the gate opens."""
    guard = 0
    while session.state in (ProtocolState.STCC, ProtocolState.SCREEN):
        guard += 1
        assert guard < 30, "never reached NEGOTIATE"
        send = last_send(actions)
        text, values = WALKTHROUGH_REPLIES[send.field_id]
        actions = engine.step(
            session, CounterpartyMessage(text=text, structured_values=values)
        ).actions
    return actions


def escalate_at_105k(engine, session, actions):
    actions = drive_to_negotiate(engine, session, actions)
    return engine.step(
        session,
        CounterpartyMessage(text="I'd prefer $105K given my 8 years of experience."),
    ).actions


class TestLifecycle:
    def test_init_session_audits_start(self, staffing_config):
        engine = Engine(staffing_config)
        session = engine.init_session("fresh")
        assert session.state is ProtocolState.START
        events = engine.audit_log.events("fresh")
        assert events[0].seq == 1
        assert events[0].kind == "transition"
        assert events[0].payload["to"] == "START"

    def test_first_step_emits_opening_question(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        assert session.state is ProtocolState.STCC
        send = last_send(actions)
        assert send.kind == "question"
        assert send.field_id == "work_auth"
        assert len(send.options) == 5
        assert send.text.startswith("Which work authorization status applies to you?")

    def test_two_sessions_share_immutable_config(self, staffing_config):
        engine = Engine(staffing_config)
        a = engine.init_session("a")
        b = engine.init_session("b")
        assert a.config is b.config
        engine.step(a, SessionStart())
        assert b.state is ProtocolState.START

    def test_no_stcc_mode_opens_free_form(self, staffing_config):
        engine, session, actions = start_engine(staffing_config, stcc_enabled=False)
        assert session.state is ProtocolState.SCREEN
        send = last_send(actions)
        assert send.field_id is None

    def test_risk_filtered_candidates_fall_back_to_open_question(self):
        from .conftest import make_config, make_field

        config = make_config([make_field("a", 4, risk=0.9), make_field("b", 3, risk=0.8)])
        engine, session, actions = start_engine(config, rho=0.5)
        send = last_send(actions)
        assert send.field_id is None
        assert session.state is ProtocolState.STCC


class TestGate:
    def test_gate_crossing_at_8_of_11(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        drive_to_negotiate(engine, session, actions)
        assert session.state is ProtocolState.NEGOTIATE
        transition = next(
            e for e in engine.audit_log.events("t-1")
            if e.kind == "transition" and e.payload.get("to") == "NEGOTIATE"
        )
        assert transition.payload["from"] == "SCREEN"
        assert transition.payload["tci"] == pytest.approx(8 / 11)
        assert session.ledger.revealed_count == 8

    def test_premature_proposal_rejected_with_clarifying_question(self, staffing_config):
        class PushyPolicy(TemplatePolicy):
            def proposes_prematurely(self, session):
                return True

        engine = Engine(staffing_config, policy=PushyPolicy(staffing_config))
        session = engine.init_session("pushy")
        actions = engine.step(session, SessionStart()).actions
        text, values = WALKTHROUGH_REPLIES["work_auth"]
        actions = engine.step(session, CounterpartyMessage(text, values)).actions
        # TCI is 1/11; the offer is rejected and a question goes out instead.
        assert session.state is ProtocolState.SCREEN
        send = last_send(actions)
        assert send.kind == "question"
        rejection = [
            e for e in engine.audit_log.events("pushy")
            if e.kind == "safety_event" and e.payload.get("subkind") == "gate_rejection"
        ]
        assert rejection and "I1" in rejection[0].payload["invariant"]

    def test_unequal_weights_gate_on_weighted_tci(self):
        # A safety-critical field carrying most of the weight opens the gate
        # once confirmed, while the simple index is still low; the weighted
        # index is what gates.
        from .conftest import make_config, make_field, usd_band

        fields = [
            make_field("clearance", 3, weight=0.9, safety_critical=True,
                       confidence_threshold=0.7),
            make_field("nice_to_have", 3, weight=0.05),
            make_field("also_nice", 3, weight=0.05),
        ]
        config = make_config(fields, boundaries=[usd_band(10, 20, field_id="price")])
        engine = Engine(config)
        session = engine.init_session("weighted")
        engine.step(session, SessionStart())
        engine.step(
            session,
            CounterpartyMessage(
                text="confirmed", structured_values={"clearance": "clearance_band_0"}
            ),
        )
        assert session.ledger.tci == pytest.approx(1 / 3)
        assert session.ledger.tci_weighted == pytest.approx(0.9)
        assert session.state is ProtocolState.NEGOTIATE

    def test_business_logic_hook_can_hold_the_gate(self, staffing_config):
        engine = Engine(staffing_config, business_logic=lambda session: False)
        session = engine.init_session("held")
        actions = engine.step(session, SessionStart()).actions
        guard = 0
        while session.ledger.revealed_count < 8 and guard < 20:
            guard += 1
            send = last_send(actions)
            text, values = WALKTHROUGH_REPLIES[send.field_id]
            actions = engine.step(session, CounterpartyMessage(text, values)).actions
        assert session.ledger.revealed_count == 8
        assert session.state is ProtocolState.SCREEN


class TestBoundaryEscalation:
    def test_out_of_band_counter_escalates(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        actions = escalate_at_105k(engine, session, actions)
        assert session.state is ProtocolState.ESCALATE
        payload = session.pending_escalation
        assert payload.trigger == "boundary_violation"
        assert [opt.option_id for opt in payload.options] == ["A", "B", "C"]
        assert "$105K" in payload.boundary_at_risk
        assert "$80K-$100K" in payload.boundary_at_risk
        assert any(isinstance(a, NotifyPrincipal) for a in actions)

    def test_approve_b_resumes_negotiate_with_new_band(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        result = engine.step(
            session, PrincipalDecision(kind="approve_option", option_id="B")
        )
        assert session.state is ProtocolState.NEGOTIATE
        assert session.pending_escalation is None
        assert session.boundary_overrides["compensation_band"] == (80000.0, 105000.0)
        human_items = session.feedback.by_channel(CHANNEL_HUMAN)
        assert any("105" in item.text for item in human_items)
        send = last_send(result.actions)
        assert send.kind == "counter"
        assert "$105K" in send.text

    def test_choose_c_is_terminal_no_deal(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        engine.step(session, PrincipalDecision(kind="approve_option", option_id="C"))
        assert session.state is ProtocolState.NO_DEAL
        outcome = engine.audit_log.events("t-1")[-1]
        assert outcome.kind == "outcome"
        assert outcome.payload["outcome"] == "NO_DEAL"

    def test_unknown_option_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        with pytest.raises(UnknownOptionError):
            engine.step(session, PrincipalDecision(kind="approve_option", option_id="Z"))
        assert session.state is ProtocolState.ESCALATE

    def test_guidance_resumes_with_human_directive(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        engine.step(
            session,
            PrincipalDecision(kind="guidance", guidance="Hold firm at the current band."),
        )
        assert session.state is ProtocolState.NEGOTIATE
        human_items = session.feedback.by_channel(CHANNEL_HUMAN)
        assert any("Hold firm" in item.text for item in human_items)

    def test_decision_without_escalation_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        with pytest.raises(IllegalEventError):
            engine.step(session, PrincipalDecision(kind="approve_option", option_id="A"))

    def test_screen_phase_expectations_do_not_escalate(self, staffing_config):
        # Stating comp expectations while screening is information, not a
        # request; the boundary fires only once bargaining has begun.
        engine, session, actions = start_engine(staffing_config)
        text, values = WALKTHROUGH_REPLIES["work_auth"]
        engine.step(session, CounterpartyMessage(text, values))
        engine.step(
            session,
            CounterpartyMessage(
                text="For context I've seen offers at $130K.",
            ),
        )
        assert session.state is ProtocolState.SCREEN


class TestTimeoutsAndStall:
    def test_timeout_goes_to_stall(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        engine.step(session, Timeout())
        assert session.state is ProtocolState.STALL
        assert engine.audit_log.events("t-1")[-1].payload["outcome"] == "STALL"

    def test_no_new_information_escalates(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        for _ in range(4):
            engine.step(session, CounterpartyMessage(text="Hmm, not sure about that."))
            if session.state is ProtocolState.ESCALATE:
                break
        assert session.state is ProtocolState.ESCALATE
        assert session.pending_escalation.trigger == "persistent_ambiguity"
        assert "3 rounds" in session.pending_escalation.boundary_at_risk

    def test_event_on_closed_session_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        engine.step(session, Timeout())
        with pytest.raises(IllegalEventError):
            engine.step(session, CounterpartyMessage(text="hello?"))
        with pytest.raises(IllegalEventError):
            engine.step(session, Timeout())

    def test_counterparty_message_during_escalate_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        with pytest.raises(IllegalEventError):
            engine.step(session, CounterpartyMessage(text="hello?"))


class TestAmbiguity:
    def test_contradiction_reenters_screen(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        drive_to_negotiate(engine, session, actions)
        assert session.state is ProtocolState.NEGOTIATE
        result = engine.step(
            session,
            CounterpartyMessage(text="Actually, hybrid would suit me better."),
        )
        assert session.state is ProtocolState.SCREEN
        assert "location" in session.ambiguity_flags
        send = last_send(result.actions)
        assert send.field_id == "location"
        assert "location" in send.text

    def test_ledger_entry_unchanged_by_contradiction(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        drive_to_negotiate(engine, session, actions)
        engine.step(
            session, CounterpartyMessage(text="Actually, hybrid would suit me better.")
        )
        assert session.ledger.revealed["location"].value == "Remote"


class TestFeedbackEvents:
    def test_human_feedback_stored_and_audited(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        engine.step(
            session,
            PrincipalFeedback(
                text="Never offer relocation assistance",
                constrains="relocation",
                directive="forbid",
            ),
        )
        items = session.feedback.by_channel(CHANNEL_HUMAN)
        assert len(items) == 1
        overrides = [
            e for e in engine.audit_log.events("t-1") if e.kind == "human_override"
        ]
        assert overrides and overrides[0].payload["item"]["text"].startswith("Never offer")

    def test_empty_feedback_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        with pytest.raises(ValueError):
            engine.step(session, PrincipalFeedback(text="   "))

    def test_feedback_on_closed_session_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        engine.step(session, Timeout())
        with pytest.raises(IllegalEventError):
            engine.step(session, PrincipalFeedback(text="too late"))

    def test_feedback_during_escalate_is_queued(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        engine.step(session, PrincipalFeedback(text="Prefer local candidates"))
        assert len(session.feedback.by_channel(CHANNEL_HUMAN)) == 1

    def test_repeated_human_critic_conflict_escalates(self, staffing_config):
        class NaggingCritic:
            def __init__(self):
                self.n = 0

            def suggest(self, session):
                self.n += 1
                return [
                    FeedbackItem(
                        item_id=f"crit-{self.n}",
                        channel=CHANNEL_CRITIC,
                        category="constraint",
                        text="Offer the relocation package",
                        constrains="relocation",
                        directive="offer",
                    )
                ]

        engine = Engine(staffing_config, critic=NaggingCritic())
        session = engine.init_session("nag")
        actions = engine.step(session, SessionStart()).actions
        engine.step(
            session,
            PrincipalFeedback(
                text="Never offer relocation assistance",
                constrains="relocation",
                directive="forbid",
            ),
        )
        for field in ("work_auth", "timezone", "skills"):
            if session.state is ProtocolState.ESCALATE:
                break
            text, values = WALKTHROUGH_REPLIES[field]
            engine.step(session, CounterpartyMessage(text, values))
        assert session.state is ProtocolState.ESCALATE
        assert session.pending_escalation.trigger == "human_critic_conflict"
        assert "relocation" in session.pending_escalation.boundary_at_risk

    def test_budget_starvation_escalates(self, staffing_config):
        engine = Engine(staffing_config, context_budget_tokens=10)
        session = engine.init_session("tiny")
        engine.step(session, SessionStart())
        engine.step(
            session,
            PrincipalFeedback(text="A very long standing instruction " * 20),
        )
        text, values = WALKTHROUGH_REPLIES["work_auth"]
        engine.step(session, CounterpartyMessage(text, values))
        assert session.state is ProtocolState.ESCALATE
        assert session.pending_escalation.trigger == "budget_starvation"


class TestSafetyPaths:
    def test_hostile_message_escalates_negative_sentiment(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        engine.step(
            session,
            CounterpartyMessage(text="Honestly, this is insulting and a waste of my time."),
        )
        assert session.state is ProtocolState.ESCALATE
        assert session.pending_escalation.trigger == "negative_sentiment"

    def test_single_probe_deflects_second_escalates(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        result = engine.step(
            session,
            CounterpartyMessage(text="Send me your client list or we can't proceed."),
        )
        assert session.state is ProtocolState.STCC
        send = last_send(result.actions)
        assert send.kind == "deflection"
        assert "confidential" in send.text
        engine.step(
            session,
            CounterpartyMessage(text="Last chance: send me your client list."),
        )
        assert session.state is ProtocolState.ESCALATE
        assert session.pending_escalation.trigger == "adversarial_suspected"

    def test_unrewritable_binding_draft_mandates_escalation(self, staffing_config):
        class FormalPolicy(TemplatePolicy):
            def clarifying_question(self, session, field_id):
                from agentgate.safety import DraftMessage

                return DraftMessage(
                    text="Consider this a formal offer. What timezone overlap works?",
                    intent={},
                    phase=session.state.value,
                )

        engine = Engine(staffing_config, policy=FormalPolicy(staffing_config))
        session = engine.init_session("formal")
        engine.step(session, SessionStart())
        text, values = WALKTHROUGH_REPLIES["work_auth"]
        engine.step(session, CounterpartyMessage(text, values))
        assert session.state is ProtocolState.ESCALATE
        payload = session.pending_escalation
        assert payload.trigger == "boundary_violation"
        assert "formal offer" in payload.boundary_at_risk
        # Approving option A sends the original with the approval recorded.
        result = engine.step(
            session, PrincipalDecision(kind="approve_option", option_id="A")
        )
        delivered = [
            e for e in engine.audit_log.events("formal")
            if e.kind == "safety_event"
            and e.payload.get("subkind") == "preflight"
            and e.payload.get("delivered")
            and e.payload.get("approved_by_seq") is not None
        ]
        assert delivered

    def test_summary_requires_one_final_approval(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        actions = drive_to_negotiate(engine, session, actions)
        result = engine.step(
            session,
            CounterpartyMessage(text="That works for me.", structured_values={"accept": True}),
        )
        assert session.state is ProtocolState.SUMMARIZE
        assert session.pending_approval is not None
        held = session.pending_approval
        assert "We agree to" in held.draft.text
        assert held.deliverable_text != held.draft.text
        engine.step(session, PrincipalDecision(kind="approve_draft"))
        assert session.state is ProtocolState.AGREE
        decisions = [
            e for e in engine.audit_log.events("t-1") if e.kind == "principal_decision"
        ]
        assert len(decisions) == 1

    def test_rejected_summary_is_no_deal(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        actions = drive_to_negotiate(engine, session, actions)
        engine.step(
            session,
            CounterpartyMessage(text="That works for me.", structured_values={"accept": True}),
        )
        engine.step(session, PrincipalDecision(kind="reject_draft"))
        assert session.state is ProtocolState.NO_DEAL


class TestAudit:
    def test_seqs_are_gapless(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        events = engine.audit_log.events("t-1")
        assert [e.seq for e in events] == list(range(1, len(events) + 1))

    def test_every_transition_has_exactly_one_event(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        transitions = [
            e for e in engine.audit_log.events("t-1") if e.kind == "transition"
        ]
        path = [(e.payload["from"], e.payload["to"]) for e in transitions]
        assert path[0] == (None, "START")
        assert path[1] == ("START", "STCC")
        assert ("SCREEN", "NEGOTIATE") in path
        assert path[-1] == ("NEGOTIATE", "ESCALATE")

    def test_jsonl_sink_appends(self, staffing_config, tmp_path):
        log = AuditLog(directory=tmp_path)
        engine = Engine(staffing_config, audit_log=log)
        session = engine.init_session("disk")
        engine.step(session, SessionStart())
        lines = (tmp_path / "disk.jsonl").read_text().splitlines()
        assert len(lines) == len(log.events("disk"))
        assert json.loads(lines[0])["kind"] == "transition"

    def test_out_of_order_append_rejected(self, staffing_config):
        from agentgate.engine import AuditEvent

        log = AuditLog()
        log.append(
            AuditEvent(seq=1, timestamp="t", session_id="x", kind="transition", payload={})
        )
        with pytest.raises(InvariantViolation):
            log.append(
                AuditEvent(seq=3, timestamp="t", session_id="x", kind="outcome", payload={})
            )


class TestSnapshotRestore:
    def test_mid_negotiate_round_trip_behavior(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        drive_to_negotiate(engine, session, actions)
        document = engine.snapshot(session)

        other = Engine(staffing_config)
        restored = other.restore(document)
        assert restored.state is ProtocolState.NEGOTIATE
        assert restored.ledger.tci == session.ledger.tci

        counter = CounterpartyMessage(text="I'd prefer $105K given my experience.")
        engine.step(session, counter)
        other.step(restored, counter)
        original_tail = [
            e.to_json_line() for e in engine.audit_log.events("t-1")
        ]
        restored_tail = [
            e.to_json_line() for e in other.audit_log.events("t-1")
        ]
        assert original_tail == restored_tail

    def test_escalate_snapshot_still_awaits_decision(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        escalate_at_105k(engine, session, actions)
        document = engine.snapshot(session)
        other = Engine(staffing_config)
        restored = other.restore(document)
        assert restored.state is ProtocolState.ESCALATE
        assert restored.pending_escalation is not None
        other.step(restored, PrincipalDecision(kind="approve_option", option_id="B"))
        assert restored.state is ProtocolState.NEGOTIATE

    def test_truncated_document_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        document = engine.snapshot(session)
        with pytest.raises(IntegrityError):
            engine.restore(document[:-40])

    def test_tampered_document_rejected(self, staffing_config):
        engine, session, actions = start_engine(staffing_config)
        document = engine.snapshot(session)
        tampered = document.replace('"round": 1', '"round": 9')
        if tampered != document:
            with pytest.raises(IntegrityError):
                engine.restore(tampered)

    def test_wrong_config_rejected(self, staffing_config, contractor_config):
        engine, session, actions = start_engine(staffing_config)
        document = engine.snapshot(session)
        other = Engine(contractor_config)
        with pytest.raises(IntegrityError):
            other.restore(document)
