"""Safety layer: binding-language detection and rewriting, boundary preflight
for outgoing drafts, conversational-risk classification, and escalation
payload construction.

Every draft headed for the counterparty passes through ``preflight``; a
verdict that is not clean requires an explicit principal approval before the
text may be delivered.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .domain import (
    BOUNDARY_NUMERIC_BAND,
    BOUNDARY_PROHIBITION,
    BoundaryRule,
    Lexicons,
    UnitMismatchError,
    check_value_in_band,
)
from .transcript import Message

APPROVAL_SUFFIX = "subject to approval"

LABEL_COOPERATIVE = "cooperative"
LABEL_ADVERSARIAL = "adversarial"
LABEL_STALLED = "stalled"
LABEL_AMBIGUOUS = "ambiguous"
LABEL_CLARIFY = "clarify"
REQUIRED_LABELS = frozenset(
    {LABEL_COOPERATIVE, LABEL_ADVERSARIAL, LABEL_STALLED, LABEL_AMBIGUOUS}
)

TRIGGER_BOUNDARY = "boundary_violation"
TRIGGER_AMBIGUITY = "persistent_ambiguity"
TRIGGER_SENTIMENT = "negative_sentiment"
TRIGGER_ADVERSARIAL = "adversarial_suspected"
TRIGGER_BUDGET = "budget_starvation"
TRIGGER_CONFLICT = "human_critic_conflict"
ESCALATION_TRIGGERS = frozenset(
    {
        TRIGGER_BOUNDARY,
        TRIGGER_AMBIGUITY,
        TRIGGER_SENTIMENT,
        TRIGGER_ADVERSARIAL,
        TRIGGER_BUDGET,
        TRIGGER_CONFLICT,
    }
)

# Default moderator window: classify risk over the most recent exchanges, not
# the whole transcript, so one early flag does not dominate forever.
MODERATOR_WINDOW = 3


class RewriteRefusedError(RuntimeError):
    """A binding phrase has no configured rewrite; escalation is mandatory."""


@dataclass(frozen=True)
class DraftMessage:
    """Outgoing text plus the structured claims it makes (field -> value)."""

    text: str
    intent: dict = field(default_factory=dict)
    phase: str = ""


@dataclass(frozen=True)
class BindingHit:
    phrase: str
    span: tuple[int, int]

    def to_dict(self) -> dict:
        return {"phrase": self.phrase, "span": list(self.span)}


@dataclass(frozen=True)
class BoundaryHit:
    rule_id: str
    detail: str
    value: float | None = None

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "detail": self.detail, "value": self.value}


@dataclass(frozen=True)
class SafetyVerdict:
    safe: bool
    requires_approval: bool
    binding_hits: tuple[BindingHit, ...] = ()
    boundary_hits: tuple[BoundaryHit, ...] = ()
    rewritten_text: str | None = None
    rewrite_refused: bool = False

    def __post_init__(self) -> None:
        if self.safe and (self.binding_hits or self.boundary_hits):
            raise ValueError("a safe verdict cannot carry hits")
        if self.requires_approval and not (
            self.binding_hits or self.boundary_hits or self.rewritten_text is not None
        ):
            raise ValueError("approval requires at least one hit or a rewrite")

    def to_dict(self) -> dict:
        return {
            "safe": self.safe,
            "requires_approval": self.requires_approval,
            "binding_hits": [hit.to_dict() for hit in self.binding_hits],
            "boundary_hits": [hit.to_dict() for hit in self.boundary_hits],
            "rewritten_text": self.rewritten_text,
            "rewrite_refused": self.rewrite_refused,
        }


def _phrase_regex(phrase: str) -> re.Pattern:
    # Whitespace-normalized, case-insensitive; word boundaries where the
    # phrase edges are word characters.
    words = [re.escape(w) for w in phrase.split()]
    body = r"\s+".join(words)
    prefix = r"\b" if phrase[:1].isalnum() else ""
    suffix = r"\b" if phrase[-1:].isalnum() else ""
    return re.compile(prefix + body + suffix, flags=re.IGNORECASE)


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for match in re.finditer(r"[.!?]+", text):
        spans.append((start, match.end()))
        start = match.end()
    if start < len(text):
        spans.append((start, len(text)))
    return spans or [(0, len(text))]


def contains_binding_language(text: str, lexicons: Lexicons) -> list[BindingHit]:
    """All binding-lexicon matches with character spans.

    A non-binding hedge suppresses a match only when both occur in the same
    sentence; a hedge elsewhere in the message does not launder the clause.
    """
    sentences = _sentence_spans(text)

    def sentence_of(pos: int) -> tuple[int, int]:
        for span in sentences:
            if span[0] <= pos < span[1]:
                return span
        return sentences[-1]

    hedged: set[tuple[int, int]] = set()
    for hedge in lexicons.nonbinding:
        for match in _phrase_regex(hedge).finditer(text):
            hedged.add(sentence_of(match.start()))

    hits: list[BindingHit] = []
    for phrase in lexicons.binding_phrases():
        for match in _phrase_regex(phrase).finditer(text):
            if sentence_of(match.start()) in hedged:
                continue
            hits.append(BindingHit(phrase=phrase, span=(match.start(), match.end())))
    hits.sort(key=lambda hit: hit.span)
    return hits


def _match_case(template: str, original: str) -> str:
    if original[:1].isupper():
        return template[:1].upper() + template[1:]
    return template


def rewrite_non_binding(text: str, lexicons: Lexicons) -> str:
    """Replace each binding phrase with its configured non-binding template
    and append "subject to approval" once if absent.

    Idempotent: text with no binding hits comes back unchanged. Raises
    ``RewriteRefusedError`` when a matched phrase has no template.
    """
    hits = contains_binding_language(text, lexicons)
    if not hits:
        return text
    rewritten = text
    for hit in sorted(hits, key=lambda h: h.span[0], reverse=True):
        template = lexicons.rewrite_for(hit.phrase)
        if template is None:
            raise RewriteRefusedError(
                f"no non-binding template for phrase {hit.phrase!r}"
            )
        start, end = hit.span
        rewritten = (
            rewritten[:start]
            + _match_case(template, rewritten[start:end])
            + rewritten[end:]
        )
    if not re.search(_phrase_regex(APPROVAL_SUFFIX), rewritten):
        stripped = rewritten.rstrip()
        if stripped and stripped[-1] in ".!?":
            rewritten = stripped[:-1] + f", {APPROVAL_SUFFIX}" + stripped[-1]
        else:
            rewritten = stripped + f", {APPROVAL_SUFFIX}"
    remaining = contains_binding_language(rewritten, lexicons)
    if remaining:
        raise RewriteRefusedError(
            f"rewrite left binding phrases: {[hit.phrase for hit in remaining]}"
        )
    return rewritten


_CURRENCY_RE = re.compile(
    r"\$\s?(\d{1,3}(?:,\d{3})+|\d+(?:\.\d+)?)\s*([kK])?\s*(/\s*(?:hour|hr|h)\b)?"
)


def scan_currency_values(text: str) -> list[tuple[float, str]]:
    """Currency amounts found in text as ``(value, unit)`` pairs.

    "$65K" -> (65000, "USD"); "$95/hour" -> (95, "USD/hour").
    """
    values: list[tuple[float, str]] = []
    for match in _CURRENCY_RE.finditer(text):
        number = float(match.group(1).replace(",", ""))
        if match.group(2):
            number *= 1000.0
        unit = "USD/hour" if match.group(3) else "USD"
        values.append((number, unit))
    return values


def _intent_value(raw) -> tuple[float | None, str | None]:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw), None
    if isinstance(raw, dict) and "value" in raw:
        value = raw["value"]
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value), raw.get("unit")
    return None, None


def preflight(
    draft: DraftMessage,
    boundaries: Sequence[BoundaryRule],
    lexicons: Lexicons,
) -> SafetyVerdict:
    """Commitment and boundary check for one outgoing draft.

    Binding phrases are detected and rewritten to non-binding form when
    templates exist; the rewrite never silently authorizes the send. Numeric
    boundaries are checked against structured intent, falling back to a
    currency scan of the text when the intent is empty. Prohibitions are
    pattern-scanned on the text.
    """
    binding_hits = tuple(contains_binding_language(draft.text, lexicons))
    rewritten: str | None = None
    rewrite_refused = False
    if binding_hits:
        try:
            rewritten = rewrite_non_binding(draft.text, lexicons)
        except RewriteRefusedError:
            rewrite_refused = True

    boundary_hits: list[BoundaryHit] = []
    numeric_rules = [r for r in boundaries if r.kind == BOUNDARY_NUMERIC_BAND]
    if draft.intent:
        for rule in numeric_rules:
            if rule.field_id not in draft.intent:
                continue
            value, unit = _intent_value(draft.intent[rule.field_id])
            if value is None:
                continue
            try:
                inside = check_value_in_band(rule, value, unit=unit)
            except UnitMismatchError as exc:
                boundary_hits.append(
                    BoundaryHit(rule_id=rule.rule_id, detail=str(exc), value=value)
                )
                continue
            if not inside:
                boundary_hits.append(
                    BoundaryHit(
                        rule_id=rule.rule_id,
                        detail=(
                            f"{rule.field_id}={value:g} outside "
                            f"[{rule.min_value:g}, {rule.max_value:g}]"
                        ),
                        value=value,
                    )
                )
    else:
        for value, unit in scan_currency_values(draft.text):
            for rule in numeric_rules:
                if rule.unit is not None and rule.unit != unit:
                    continue
                if not check_value_in_band(rule, value):
                    boundary_hits.append(
                        BoundaryHit(
                            rule_id=rule.rule_id,
                            detail=(
                                f"text mentions {value:g} {unit} outside "
                                f"[{rule.min_value:g}, {rule.max_value:g}]"
                            ),
                            value=value,
                        )
                    )

    for rule in boundaries:
        if rule.kind != BOUNDARY_PROHIBITION:
            continue
        for pattern in rule.patterns:
            if _phrase_regex(pattern).search(draft.text):
                boundary_hits.append(
                    BoundaryHit(rule_id=rule.rule_id, detail=f"prohibited phrase {pattern!r}")
                )

    clean = not binding_hits and not boundary_hits
    return SafetyVerdict(
        safe=clean,
        requires_approval=not clean,
        binding_hits=binding_hits,
        boundary_hits=tuple(boundary_hits),
        rewritten_text=rewritten,
        rewrite_refused=rewrite_refused,
    )


class ModeratorClassifier(Protocol):
    """Plug point for a real few-shot classifier."""

    def classify(
        self, history: Sequence[Message], label_set: Sequence[str]
    ) -> tuple[str, float]:
        ...


class LexiconModerator:
    """Deterministic default: per-label phrase-evidence counts, normalized."""

    def __init__(self, lexicons: Lexicons, window: int = MODERATOR_WINDOW):
        self.lexicons = lexicons
        self.window = window

    def classify(
        self, history: Sequence[Message], label_set: Sequence[str]
    ) -> tuple[str, float]:
        recent = list(history)[-self.window:]
        text = " ".join(" ".join(m.text.lower().split()) for m in recent)
        counts: dict[str, int] = {}
        for label in label_set:
            phrases = self.lexicons.moderator.get(label, ())
            counts[label] = sum(text.count(p.lower()) for p in phrases)
        total = sum(counts.values())
        if total == 0:
            return LABEL_CLARIFY, 0.0
        # First label in label_set order wins ties, deterministically.
        top = max(label_set, key=lambda lb: counts.get(lb, 0))
        return top, counts[top] / total


def moderator_classify(
    history: Sequence[Message],
    label_set: Sequence[str],
    tau_classify: float,
    classifier: ModeratorClassifier | None = None,
    lexicons: Lexicons | None = None,
) -> tuple[str, float]:
    """Label conversational risk with selective abstention.

    Any classification below ``tau_classify`` comes back as 'clarify' so the
    engine asks rather than acting on a shaky read.
    """
    missing = REQUIRED_LABELS - set(label_set)
    if missing:
        raise ValueError(f"label_set missing required labels {sorted(missing)}")
    if classifier is None:
        if lexicons is None:
            raise ValueError("default moderator needs lexicons")
        classifier = LexiconModerator(lexicons)
    label, confidence = classifier.classify(history, label_set)
    if confidence < tau_classify:
        return LABEL_CLARIFY, confidence
    return label, confidence


@dataclass(frozen=True)
class EscalationOption:
    """One decision option with its trade-off text and machine effect."""

    option_id: str
    label: str
    tradeoff: str
    effect: dict = field(default_factory=lambda: {"kind": "resume"})

    def to_dict(self) -> dict:
        return {
            "option_id": self.option_id,
            "label": self.label,
            "tradeoff": self.tradeoff,
            "effect": dict(self.effect),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EscalationOption":
        return cls(
            option_id=raw["option_id"],
            label=raw["label"],
            tradeoff=raw["tradeoff"],
            effect=dict(raw["effect"]),
        )


@dataclass(frozen=True)
class EscalationPayload:
    """The packet a principal needs to decide: snapshot, ledger, boundary
    delta, safety events, options with trade-offs, and the explicit request."""

    trigger: str
    state_snapshot: dict
    tci_ledger: dict
    boundary_at_risk: str
    safety_events: tuple[dict, ...]
    options: tuple[EscalationOption, ...]
    approval_request: str
    resume_state: str = ""

    def __post_init__(self) -> None:
        if self.trigger not in ESCALATION_TRIGGERS:
            raise ValueError(f"unknown escalation trigger {self.trigger!r}")
        if not 2 <= len(self.options) <= 3:
            raise ValueError("payload needs 2-3 options")
        if not self.boundary_at_risk:
            raise ValueError("boundary_at_risk must be stated")
        if not self.approval_request:
            raise ValueError("approval_request must be stated")

    def option(self, option_id: str) -> EscalationOption:
        for opt in self.options:
            if opt.option_id == option_id:
                return opt
        raise KeyError(option_id)

    def to_dict(self) -> dict:
        return {
            "trigger": self.trigger,
            "state_snapshot": dict(self.state_snapshot),
            "tci_ledger": dict(self.tci_ledger),
            "boundary_at_risk": self.boundary_at_risk,
            "safety_events": [dict(e) for e in self.safety_events],
            "options": [opt.to_dict() for opt in self.options],
            "approval_request": self.approval_request,
            "resume_state": self.resume_state,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EscalationPayload":
        return cls(
            trigger=raw["trigger"],
            state_snapshot=dict(raw["state_snapshot"]),
            tci_ledger=dict(raw["tci_ledger"]),
            boundary_at_risk=raw["boundary_at_risk"],
            safety_events=tuple(dict(e) for e in raw["safety_events"]),
            options=tuple(EscalationOption.from_dict(o) for o in raw["options"]),
            approval_request=raw["approval_request"],
            resume_state=raw.get("resume_state", ""),
        )


def build_escalation_payload(
    session,
    trigger: str,
    options: Sequence[EscalationOption],
    boundary_at_risk: str | None = None,
    safety_events: Iterable[dict] = (),
) -> EscalationPayload:
    """Assemble a payload from the session's current state.

    ``session`` provides state, history, and ledger (duck-typed to keep this
    layer independent of the engine). Construction is refused when the
    minimum content cannot be met.
    """
    if trigger not in ESCALATION_TRIGGERS:
        raise ValueError(f"unknown escalation trigger {trigger!r}")
    if not options:
        raise ValueError("escalation payload requires options")
    state_name = getattr(session.state, "value", str(session.state))
    snapshot = {
        "phase": state_name,
        "last_messages": [m.to_dict() for m in list(session.history)[-3:]],
    }
    ledger = session.ledger
    ledger_view = {
        "revealed": sorted(ledger.revealed),
        "missing": list(ledger.missing),
        "tci": ledger.tci,
        "tci_weighted": ledger.tci_weighted,
    }
    if boundary_at_risk is None:
        boundary_at_risk = f"no boundary delta; trigger={trigger}"
    letters = ", ".join(opt.option_id for opt in options)
    return EscalationPayload(
        trigger=trigger,
        state_snapshot=snapshot,
        tci_ledger=ledger_view,
        boundary_at_risk=boundary_at_risk,
        safety_events=tuple(dict(e) for e in safety_events),
        options=tuple(options),
        approval_request=f"Your decision? Please approve {letters}, or provide guidance.",
        resume_state=state_name,
    )


@dataclass(frozen=True)
class DetectionReport:
    """Commitment-detection quality against a labeled phrase corpus."""

    true_pos: int
    false_pos: int
    true_neg: int
    false_neg: int

    @property
    def false_pos_rate(self) -> float:
        denom = self.false_pos + self.true_neg
        return self.false_pos / denom if denom else 0.0

    @property
    def false_neg_rate(self) -> float:
        denom = self.false_neg + self.true_pos
        return self.false_neg / denom if denom else 0.0

    def to_dict(self) -> dict:
        return {
            "true_pos": self.true_pos,
            "false_pos": self.false_pos,
            "true_neg": self.true_neg,
            "false_neg": self.false_neg,
            "false_pos_rate": self.false_pos_rate,
            "false_neg_rate": self.false_neg_rate,
        }


def detection_metrics(
    corpus: Path | str | Sequence[str], lexicons: Lexicons
) -> DetectionReport:
    """Score the binding-language detector on ``label<TAB>text`` lines."""
    if isinstance(corpus, (Path, str)):
        lines = Path(corpus).read_text().splitlines()
    else:
        lines = list(corpus)
    tp = fp = tn = fn = 0
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        label, text = line.split("\t", 1)
        detected = bool(contains_binding_language(text, lexicons))
        if label == "binding":
            if detected:
                tp += 1
            else:
                fn += 1
        elif label == "nonbinding":
            if detected:
                fp += 1
            else:
                tn += 1
        else:
            raise ValueError(f"unknown corpus label {label!r}")
    return DetectionReport(true_pos=tp, false_pos=fp, true_neg=tn, false_neg=fn)
