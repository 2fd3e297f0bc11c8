"""Scenario runner: drives one engine session against a scripted persona and
a principal policy until a terminal state, collecting the trace and metrics.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dataclass_field

from .domain import DomainConfig
from .engine import (
    DECISION_APPROVE_DRAFT,
    DECISION_APPROVE_OPTION,
    DECISION_DECLINE,
    DECISION_GUIDANCE,
    DECISION_REJECT_DRAFT,
    AuditEvent,
    AuditLog,
    CounterpartyMessage,
    Engine,
    PrincipalDecision,
    SendMessage,
    SessionStart,
    SessionState,
    Timeout,
)
from .metrics import MetricsReport, compute_metrics
from .personas import Persona, PersonaRun, ScenarioError
from .safety import EscalationPayload


@dataclass(frozen=True)
class PrincipalPolicy:
    """Scripted decision-making for escalations and held drafts.

    ``escalation_choices`` maps trigger -> option id, "decline",
    "guidance:<text>", or "random" (seeded).
    """

    policy_id: str
    escalation_choices: dict = dataclass_field(default_factory=dict)
    default_choice: str = "A"
    approve_drafts: bool = True

    def decide(self, payload: EscalationPayload, rng: random.Random) -> PrincipalDecision:
        choice = self.escalation_choices.get(payload.trigger, self.default_choice)
        if choice == "random":
            option_ids = [opt.option_id for opt in payload.options]
            pick = rng.choice(option_ids + ["decline"])
            if pick == "decline":
                return PrincipalDecision(kind=DECISION_DECLINE)
            return PrincipalDecision(kind=DECISION_APPROVE_OPTION, option_id=pick)
        if choice == "decline":
            return PrincipalDecision(kind=DECISION_DECLINE)
        if choice.startswith("guidance:"):
            return PrincipalDecision(
                kind=DECISION_GUIDANCE, guidance=choice.split(":", 1)[1]
            )
        option_ids = [opt.option_id for opt in payload.options]
        if choice not in option_ids:
            choice = option_ids[0]
        return PrincipalDecision(kind=DECISION_APPROVE_OPTION, option_id=choice)

    def draft_decision(self) -> PrincipalDecision:
        if self.approve_drafts:
            return PrincipalDecision(kind=DECISION_APPROVE_DRAFT)
        return PrincipalDecision(kind=DECISION_REJECT_DRAFT)


RESPONSIVE_POLICY = PrincipalPolicy(
    policy_id="responsive",
    escalation_choices={
        "boundary_violation": "A",
        "persistent_ambiguity": "B",
        "adversarial_suspected": "B",
        "negative_sentiment": "B",
        "budget_starvation": "A",
        "human_critic_conflict": "A",
    },
)

BUILTIN_POLICIES = {
    "responsive": RESPONSIVE_POLICY,
    "approve_b": PrincipalPolicy(
        policy_id="approve_b",
        escalation_choices={**RESPONSIVE_POLICY.escalation_choices, "boundary_violation": "B"},
    ),
    "choose_c": PrincipalPolicy(
        policy_id="choose_c",
        escalation_choices={**RESPONSIVE_POLICY.escalation_choices, "boundary_violation": "C"},
    ),
    "random": PrincipalPolicy(
        policy_id="random",
        escalation_choices={
            trigger: "random" for trigger in RESPONSIVE_POLICY.escalation_choices
        },
    ),
    "reject_drafts": PrincipalPolicy(
        policy_id="reject_drafts",
        escalation_choices=dict(RESPONSIVE_POLICY.escalation_choices),
        approve_drafts=False,
    ),
}


def build_policy(policy_id: str) -> PrincipalPolicy:
    try:
        return BUILTIN_POLICIES[policy_id]
    except KeyError:
        raise KeyError(f"unknown principal policy {policy_id!r}") from None


@dataclass
class ScenarioResult:
    session: SessionState
    trace: list[AuditEvent]
    metrics: MetricsReport
    engine: Engine


def run_scenario(
    config: DomainConfig,
    persona: Persona,
    principal_policy: PrincipalPolicy,
    seed: int,
    session_id: str | None = None,
    audit_log: AuditLog | None = None,
    **engine_kwargs,
) -> ScenarioResult:
    """Run one scripted session to a terminal state.

    The seed fixes every stochastic choice (only the principal policy's
    "random" choices use it); the engine itself is deterministic. Metrics are
    computed from the persisted trace alone.
    """
    persona.validate_against(config)
    rng = random.Random(seed)
    engine = Engine(config, audit_log=audit_log or AuditLog(), **engine_kwargs)
    sid = session_id or f"{config.domain_id}-{persona.persona_id}-{seed}"
    session = engine.init_session(sid, scenario={"persona": persona.persona_id, "seed": seed})
    run = PersonaRun(persona)

    result = engine.step(session, SessionStart())
    last_send: SendMessage | None = next(
        (a for a in result.actions if isinstance(a, SendMessage)), None
    )
    silent_pokes = 0
    max_iterations = 6 * config.max_rounds + 40

    for _ in range(max_iterations):
        if session.closed:
            break
        if session.pending_escalation is not None:
            decision = principal_policy.decide(session.pending_escalation, rng)
            result = engine.step(session, decision)
        elif session.pending_approval is not None:
            result = engine.step(session, principal_policy.draft_decision())
        elif last_send is not None:
            reply = run.respond(last_send)
            if reply is None:
                silent_pokes += 1
                if silent_pokes >= 2:
                    result = engine.step(session, Timeout())
                    silent_pokes = 0
                else:
                    continue
            else:
                silent_pokes = 0
                text, values = reply
                result = engine.step(
                    session, CounterpartyMessage(text=text, structured_values=values)
                )
        else:
            # Nothing outstanding and nobody to wait for: treat as inactivity.
            result = engine.step(session, Timeout())
        send = next((a for a in result.actions if isinstance(a, SendMessage)), None)
        if send is not None:
            last_send = send
    else:
        raise ScenarioError(
            f"scenario did not terminate within {max_iterations} iterations"
        )

    trace = engine.audit_log.events(session.session_id)
    metrics = compute_metrics(trace, config)
    return ScenarioResult(session=session, trace=trace, metrics=metrics, engine=engine)
