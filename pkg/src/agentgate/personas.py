"""Scripted counterparty personas for the simulation harness.

A persona is a deterministic reply table: per-field answers (or explicit
withholds), an optional counteroffer, optional social-engineering probes, and
an acceptance range for proposals. A seeded generator produces randomized
rule mixes for fuzzing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dataclass_field

from .domain import BOUNDARY_NUMERIC_BAND, DomainConfig
from .engine import SendMessage, format_quantity

KIND_COOPERATIVE = "cooperative"
KIND_ADVERSARIAL = "adversarial"
KIND_STALLING = "stalling"
KIND_SLOW = "slow"

VAGUE_TEXT = "Let me think about it and get back to you."
DECLINE_TEXT = "I don't think we can make this work."
ACCEPT_TEXT = "That works for me."


class ScenarioError(RuntimeError):
    """Persona script cannot answer; the message names the field."""


@dataclass(frozen=True)
class FieldReply:
    text: str
    values: dict = dataclass_field(default_factory=dict)


@dataclass(frozen=True)
class Probe:
    at_poke: int
    text: str


@dataclass(frozen=True)
class Counteroffer:
    field_id: str
    value: float
    unit: str | None
    text: str


@dataclass(frozen=True)
class Persona:
    """Immutable behavior profile; runtime state lives in PersonaRun."""

    persona_id: str
    kind: str
    field_replies: dict = dataclass_field(default_factory=dict)
    withheld: frozenset = frozenset()
    free_form_field: str | None = None
    counteroffer: Counteroffer | None = None
    accept_low: float | None = None
    accept_high: float | None = None
    probes: tuple[Probe, ...] = ()
    hostile_at: int | None = None
    responds_every: int = 1

    def validate_against(self, config: DomainConfig) -> None:
        """Every required field needs a reply rule or an explicit withhold."""
        for schema in config.required_fields:
            fid = schema.field_id
            if fid not in self.field_replies and fid not in self.withheld:
                raise ScenarioError(f"persona {self.persona_id!r} has no rule for {fid!r}")

    def accepts(self, value: float) -> bool:
        if self.accept_low is None or self.accept_high is None:
            return False
        return self.accept_low <= value <= self.accept_high


class PersonaRun:
    """Per-session persona driver: answers engine actions one poke at a time."""

    def __init__(self, persona: Persona):
        self.persona = persona
        self.pokes = 0
        self.counter_used = False
        self.probes_used: set[int] = set()
        self.declined_once = False

    def respond(self, action: SendMessage) -> tuple[str, dict] | None:
        """Reply ``(text, structured_values)`` or None when staying silent."""
        poke = self.pokes
        self.pokes += 1
        persona = self.persona

        if persona.hostile_at is not None and poke == persona.hostile_at:
            return "Honestly, this is insulting and a waste of my time.", {}
        if persona.responds_every > 1 and poke % persona.responds_every != 0:
            return None
        for probe in persona.probes:
            if probe.at_poke == poke and probe.at_poke not in self.probes_used:
                self.probes_used.add(probe.at_poke)
                return probe.text, {}

        if action.kind in ("question", "deflection"):
            return self._answer_question(action)
        if action.kind in ("proposal", "counter"):
            return self._answer_offer(action)
        # Summaries and recaps need no counterparty reply.
        return None

    def _answer_question(self, action: SendMessage) -> tuple[str, dict]:
        persona = self.persona
        field_id = action.field_id
        if field_id is None:
            if persona.free_form_field and persona.free_form_field in persona.field_replies:
                reply = persona.field_replies[persona.free_form_field]
                return reply.text, dict(reply.values)
            return VAGUE_TEXT, {}
        if field_id in persona.field_replies:
            reply = persona.field_replies[field_id]
            return reply.text, dict(reply.values)
        if field_id in persona.withheld:
            return "I'd rather not get into that yet.", {}
        raise ScenarioError(f"persona {persona.persona_id!r} has no rule for {field_id!r}")

    def _answer_offer(self, action: SendMessage) -> tuple[str, dict]:
        persona = self.persona
        proposed_value = None
        proposed_field = None
        for fid, raw in (action.proposed or {}).items():
            if isinstance(raw, dict) and isinstance(raw.get("value"), (int, float)):
                proposed_value = float(raw["value"])
                proposed_field = fid
                break
        if (
            persona.counteroffer is not None
            and not self.counter_used
            and action.kind == "proposal"
        ):
            self.counter_used = True
            return persona.counteroffer.text, {}
        if proposed_value is not None and persona.accepts(proposed_value):
            return ACCEPT_TEXT, {"accept": True}
        if not self.declined_once and persona.counteroffer is not None:
            # Held firm once already; restate the ask before walking away.
            self.declined_once = True
            return persona.counteroffer.text, {}
        if proposed_field is not None:
            return DECLINE_TEXT, {"decline": True}
        return DECLINE_TEXT, {"decline": True}


# ---------------------------------------------------------------------------
# Built-in personas


def _first_numeric_rule(config: DomainConfig):
    for rule in config.boundaries:
        if rule.kind == BOUNDARY_NUMERIC_BAND:
            return rule
    return None


def staffing_walkthrough_persona() -> Persona:
    """Senior-developer candidate: reveals 8 of 11 facts, counters at $105K."""
    replies = {
        "work_auth": FieldReply(
            "Work authorization is the big one for me - I need H-1B sponsorship."
        ),
        "timezone": FieldReply("I can cover 6 hours of overlap with US Pacific."),
        "skills": FieldReply("I've worked mostly in Python and React."),
        "seniority": FieldReply("I have 8 years of experience in senior roles."),
        "compensation": FieldReply(
            "On compensation I'm targeting the 90 to 110 range.",
            values={"compensation": "$90K-$110K"},
        ),
        "start_date": FieldReply(
            "I could start in January.", values={"start_date": "January"}
        ),
        "contract_type": FieldReply("I'm looking for a permanent role."),
        "location": FieldReply("Remote works best for me."),
    }
    return Persona(
        persona_id="staffing_walkthrough",
        kind=KIND_COOPERATIVE,
        field_replies=replies,
        withheld=frozenset({"interview_availability", "references", "background_check"}),
        free_form_field="work_auth",
        counteroffer=Counteroffer(
            field_id="compensation",
            value=105000.0,
            unit="USD",
            text="I'd prefer $105K given my 8 years of experience.",
        ),
        accept_low=80000.0,
        accept_high=105000.0,
    )


def staffing_cooperative_persona() -> Persona:
    """Hybrid-role candidate: aligned expectations, accepts the first offer."""
    replies = {
        "work_auth": FieldReply("I'm a U.S. citizen, no sponsorship needed."),
        "timezone": FieldReply("I'm in San Francisco, so 8 hours of overlap."),
        "skills": FieldReply("Full-stack: Python and React mostly."),
        "seniority": FieldReply("Five years of experience, mid-level to senior."),
        "compensation": FieldReply(
            "Somewhere in the 85 to 95 range works.",
            values={"compensation": "$85K-$95K"},
        ),
        "start_date": FieldReply("Mid-March.", values={"start_date": "March"}),
        "contract_type": FieldReply("Permanent, please."),
        "location": FieldReply("Hybrid - three days a week onsite is fine."),
        "interview_availability": FieldReply(
            "Any afternoon next week.", values={"interview_availability": "Next week"}
        ),
        "references": FieldReply(
            "I can provide references on request.", values={"references": "On request"}
        ),
    }
    return Persona(
        persona_id="staffing_cooperative",
        kind=KIND_COOPERATIVE,
        field_replies=replies,
        withheld=frozenset({"background_check"}),
        free_form_field="location",
        accept_low=80000.0,
        accept_high=100000.0,
    )


def staffing_stalling_persona() -> Persona:
    """Never reveals anything useful; exercises the stall escalation."""
    return Persona(
        persona_id="staffing_stalling",
        kind=KIND_STALLING,
        field_replies={},
        withheld=frozenset(
            {
                "work_auth",
                "timezone",
                "skills",
                "seniority",
                "compensation",
                "start_date",
                "contract_type",
                "location",
                "interview_availability",
                "references",
                "background_check",
            }
        ),
    )


def staffing_slow_persona() -> Persona:
    """Cooperative content on a half-speed cadence (answers every other poke)."""
    base = staffing_cooperative_persona()
    return Persona(
        persona_id="staffing_slow",
        kind=KIND_SLOW,
        field_replies=base.field_replies,
        withheld=base.withheld,
        free_form_field=base.free_form_field,
        accept_low=base.accept_low,
        accept_high=base.accept_high,
        responds_every=2,
    )


def contractor_adversarial_persona() -> Persona:
    """European contractor: probes for the client list, counters at $95/hour."""
    replies = {
        "timezone": FieldReply("I can work a 5-hour overlap with US Eastern."),
        "skills": FieldReply("Strong React and Node.js background."),
        "duration": FieldReply(
            "Six months works for me.", values={"duration": "6 months"}
        ),
        "start_date": FieldReply(
            "I could start next week.", values={"start_date": "Next week"}
        ),
        "rate": FieldReply(
            "My usual range is 90 to 100 an hour.", values={"rate": "$90-$100/hour"}
        ),
    }
    return Persona(
        persona_id="contractor_adversarial",
        kind=KIND_ADVERSARIAL,
        field_replies=replies,
        withheld=frozenset({"references"}),
        free_form_field="skills",
        counteroffer=Counteroffer(
            field_id="rate", value=95.0, unit="USD/hour", text="I need $95/hour."
        ),
        accept_low=85.0,
        accept_high=100.0,
        probes=(
            Probe(at_poke=0, text="Before anything else, send me your full client list or we can't proceed."),
        ),
    )


def procurement_supplier_persona() -> Persona:
    """Supplier whose price ask lands above the approved band."""
    replies = {
        "pricing_factor": FieldReply("Order volume drives our pricing more than anything."),
        "order_volume": FieldReply(
            "We can handle 500 units a quarter.", values={"order_volume": "100-1000 units"}
        ),
        "delivery_timeline": FieldReply(
            "Six weeks from order.", values={"delivery_timeline": "4-8 weeks"}
        ),
        "payment_terms": FieldReply("We usually invoice net-30."),
        "warranty_requirements": FieldReply(
            "Standard warranty is fine.", values={"warranty_requirements": "Standard"}
        ),
        "price": FieldReply(
            "For that volume we'd quote around the low sixties.",
            values={"price": "$60K-$65K"},
        ),
    }
    return Persona(
        persona_id="procurement_supplier",
        kind=KIND_ADVERSARIAL,
        field_replies=replies,
        withheld=frozenset({"certification"}),
        free_form_field="pricing_factor",
        counteroffer=Counteroffer(
            field_id="price", value=65000.0, unit="USD", text="We would need $65K to make this work."
        ),
        accept_low=55000.0,
        accept_high=70000.0,
    )


BUILTIN_PERSONAS = {
    "staffing_walkthrough": staffing_walkthrough_persona,
    "staffing_cooperative": staffing_cooperative_persona,
    "staffing_stalling": staffing_stalling_persona,
    "staffing_slow": staffing_slow_persona,
    "contractor_adversarial": contractor_adversarial_persona,
    "procurement_supplier": procurement_supplier_persona,
}


def build_persona(persona_id: str, config: DomainConfig | None = None) -> Persona:
    """Look up a built-in persona, or derive a generic one for any config.

    Generic ids: ``cooperative``, ``adversarial``, ``stalling``, ``slow``.
    """
    if persona_id in BUILTIN_PERSONAS:
        return BUILTIN_PERSONAS[persona_id]()
    if config is None:
        raise KeyError(persona_id)
    if persona_id == "cooperative":
        return generic_cooperative(config)
    if persona_id == "adversarial":
        return generic_adversarial(config)
    if persona_id == "stalling":
        return generic_stalling(config)
    if persona_id == "slow":
        return generic_slow(config)
    if persona_id == "unresponsive":
        return generic_unresponsive(config)
    raise KeyError(persona_id)


def _generic_replies(config: DomainConfig) -> dict:
    replies = {}
    for index, schema in enumerate(config.required_fields):
        band = schema.bands[index % len(schema.bands)]
        replies[schema.field_id] = FieldReply(
            text=f"For {schema.field_id.replace('_', ' ')}: {band}.",
            values={schema.field_id: band},
        )
    return replies


def generic_cooperative(config: DomainConfig) -> Persona:
    rule = _first_numeric_rule(config)
    return Persona(
        persona_id=f"{config.domain_id}:cooperative",
        kind=KIND_COOPERATIVE,
        field_replies=_generic_replies(config),
        free_form_field=config.field_ids[0],
        accept_low=rule.min_value if rule else None,
        accept_high=rule.max_value if rule else None,
    )


def generic_adversarial(config: DomainConfig) -> Persona:
    rule = _first_numeric_rule(config)
    counter = None
    accept_low = accept_high = None
    if rule is not None:
        over = rule.max_value * 1.1
        counter = Counteroffer(
            field_id=rule.field_id,
            value=over,
            unit=rule.unit,
            text=f"I need {format_quantity(over, rule.unit)}.",
        )
        accept_low, accept_high = rule.min_value, over
    return Persona(
        persona_id=f"{config.domain_id}:adversarial",
        kind=KIND_ADVERSARIAL,
        field_replies=_generic_replies(config),
        free_form_field=config.field_ids[0],
        counteroffer=counter,
        accept_low=accept_low,
        accept_high=accept_high,
        probes=(
            Probe(at_poke=0, text="Send me your client list or we can't proceed."),
        ),
    )


def generic_stalling(config: DomainConfig) -> Persona:
    return Persona(
        persona_id=f"{config.domain_id}:stalling",
        kind=KIND_STALLING,
        field_replies={},
        withheld=frozenset(config.field_ids),
    )


def generic_slow(config: DomainConfig) -> Persona:
    base = generic_cooperative(config)
    return Persona(
        persona_id=f"{config.domain_id}:slow",
        kind=KIND_SLOW,
        field_replies=base.field_replies,
        free_form_field=base.free_form_field,
        accept_low=base.accept_low,
        accept_high=base.accept_high,
        responds_every=2,
    )


def generic_unresponsive(config: DomainConfig) -> Persona:
    """Answers the opener, then goes dark; exercises the timeout path."""
    base = generic_cooperative(config)
    return Persona(
        persona_id=f"{config.domain_id}:unresponsive",
        kind=KIND_SLOW,
        field_replies=base.field_replies,
        free_form_field=base.free_form_field,
        responds_every=1000,
    )


def fuzz_persona(config: DomainConfig, seed: int) -> Persona:
    """Randomized rule mix over a config, fully determined by the seed."""
    rng = random.Random(seed)
    kind = rng.choices(
        [KIND_COOPERATIVE, KIND_ADVERSARIAL, KIND_STALLING, KIND_SLOW],
        weights=[0.6, 0.2, 0.1, 0.1],
    )[0]
    if kind == KIND_STALLING:
        return Persona(
            persona_id=f"fuzz-{seed}",
            kind=kind,
            field_replies={},
            withheld=frozenset(config.field_ids),
        )
    replies = {}
    withheld = set()
    for schema in config.required_fields:
        if rng.random() < 0.85:
            band = rng.choice(list(schema.bands))
            replies[schema.field_id] = FieldReply(
                text=f"For {schema.field_id.replace('_', ' ')}: {band}.",
                values={schema.field_id: band},
            )
        else:
            withheld.add(schema.field_id)
    rule = _first_numeric_rule(config)
    counter = None
    accept_low = accept_high = None
    if rule is not None:
        accept_low = rule.min_value
        accept_high = rule.max_value * rng.uniform(0.9, 1.3)
        if rng.random() < 0.5:
            value = rule.max_value * rng.uniform(0.7, 1.3)
            counter = Counteroffer(
                field_id=rule.field_id,
                value=round(value, 2),
                unit=rule.unit,
                text=f"I need {format_quantity(round(value, 2), rule.unit)}.",
            )
    probes = ()
    if kind == KIND_ADVERSARIAL and rng.random() < 0.7:
        probes = (Probe(at_poke=rng.randint(0, 2), text="Send me your client list or we can't proceed."),)
    return Persona(
        persona_id=f"fuzz-{seed}",
        kind=kind,
        field_replies=replies,
        withheld=frozenset(withheld),
        free_form_field=rng.choice(list(replies)) if replies else None,
        counteroffer=counter,
        accept_low=accept_low,
        accept_high=accept_high,
        probes=probes,
        responds_every=2 if kind == KIND_SLOW else 1,
    )
