"""Opening-question selection: pick the single highest-expected-information-
gain banded question, and check drafts for neutral phrasing.

The belief over required fields is factored: one categorical distribution per
field, initialized from the schema priors. A multiple-choice answer collapses
its field, so the expected gain of asking equals the field's current entropy
(in bits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .domain import (
    MAX_QUESTION_OPTIONS,
    MIN_QUESTION_OPTIONS,
    DomainConfig,
    FieldSchema,
    Lexicons,
)

ESCAPE_OPTION = "Other/Not sure"


def entropy_bits(distribution: tuple[float, ...]) -> float:
    """Shannon entropy in bits; zero-mass outcomes contribute nothing."""
    return -sum(p * math.log2(p) for p in distribution if p > 0.0)


@dataclass(frozen=True)
class BeliefState:
    """Factored belief over required fields: band distribution per field."""

    distributions: dict[str, tuple[float, ...]]
    revealed: frozenset[str] = frozenset()

    @classmethod
    def from_config(cls, config: DomainConfig) -> "BeliefState":
        return cls(
            distributions={s.field_id: s.prior for s in config.required_fields},
            revealed=frozenset(),
        )

    def entropy_of(self, field_id: str) -> float:
        if field_id in self.revealed:
            return 0.0
        return entropy_bits(self.distributions[field_id])

    @property
    def total_entropy_bits(self) -> float:
        return sum(
            entropy_bits(dist)
            for fid, dist in self.distributions.items()
            if fid not in self.revealed
        )

    def collapse(self, field_id: str, band_index: int) -> "BeliefState":
        """Answer received: the field's distribution becomes one-hot."""
        dist = self.distributions[field_id]
        if not 0 <= band_index < len(dist):
            raise ValueError(f"band index {band_index} out of range for {field_id!r}")
        onehot = tuple(1.0 if i == band_index else 0.0 for i in range(len(dist)))
        updated = dict(self.distributions)
        updated[field_id] = onehot
        return BeliefState(distributions=updated, revealed=self.revealed | {field_id})

    def mark_revealed(self, field_id: str) -> "BeliefState":
        """Reveal without a known band (e.g. free-text answer): entropy drops
        to zero but no specific band is asserted."""
        if field_id not in self.distributions:
            raise KeyError(field_id)
        return replace(self, revealed=self.revealed | {field_id})


@dataclass(frozen=True)
class QuestionDraft:
    """A candidate banded question with its expected information gain."""

    field_id: str
    prompt_text: str
    options: tuple[str, ...]
    expected_ig_bits: float
    risk_score: float
    include_escape: bool = False

    def __post_init__(self) -> None:
        if not MIN_QUESTION_OPTIONS <= len(self.options) <= MAX_QUESTION_OPTIONS:
            raise ValueError(
                f"{len(self.options)} options outside "
                f"[{MIN_QUESTION_OPTIONS}, {MAX_QUESTION_OPTIONS}]"
            )
        if self.expected_ig_bits < 0:
            raise ValueError("expected IG must be non-negative")
        if not 0.0 <= self.risk_score <= 1.0:
            raise ValueError("risk score outside [0, 1]")


def expected_ig(field_schema: FieldSchema, belief: BeliefState) -> float:
    """Expected gain of asking about a field = its current entropy in bits.

    Under the collapse model the answer fully determines the band, so the
    posterior entropy is zero and the expectation is exact. Revealed fields
    return 0.
    """
    return belief.entropy_of(field_schema.field_id)


def rank_attributes(
    config: DomainConfig, belief: BeliefState, rho: float = 1.0
) -> list[QuestionDraft]:
    """Unrevealed, question-eligible fields ranked by expected IG descending.

    Candidates with declared risk above ``rho`` are filtered out; an empty
    result tells the engine to fall back to open-ended clarification. Ties
    keep schema declaration order.
    """
    candidates: list[QuestionDraft] = []
    for schema in config.required_fields:
        if schema.field_id in belief.revealed:
            continue
        if not schema.question_eligible:
            continue
        if schema.risk > rho:
            continue
        candidates.append(
            QuestionDraft(
                field_id=schema.field_id,
                prompt_text=schema.question,
                options=schema.bands,
                expected_ig_bits=expected_ig(schema, belief),
                risk_score=schema.risk,
                include_escape=schema.bands_from_range,
            )
        )
    # Stable sort preserves declaration order among equal-IG candidates.
    candidates.sort(key=lambda draft: -draft.expected_ig_bits)
    return candidates


def build_stcc_question(top: QuestionDraft) -> str:
    """Render the chosen question with its options enumerated verbatim.

    "Other/Not sure" is appended when the bands were discretized from a
    continuous range and may be too coarse.
    """
    options = list(top.options)
    if top.include_escape:
        options.append(ESCAPE_OPTION)
    return f"{top.prompt_text} {{{', '.join(options)}}}"


@dataclass(frozen=True)
class NeutralityViolation:
    kind: str
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


def validate_neutral_compliance(
    draft: str, lexicons: Lexicons
) -> list[NeutralityViolation]:
    """Scan a prompt for non-neutral wording. Empty list means pass.

    Flags urgency/persuasion phrases, leading constructions, binding-lexicon
    hits, and degenerate empty prompts. Violations are data for the caller,
    not faults.
    """
    violations: list[NeutralityViolation] = []
    if not draft.strip():
        violations.append(NeutralityViolation(kind="empty_prompt", detail="empty prompt"))
        return violations
    lowered = " ".join(draft.lower().split())
    for phrase in lexicons.persuasion:
        if phrase.lower() in lowered:
            violations.append(
                NeutralityViolation(kind="urgency_framing", detail=phrase)
            )
    for phrase in lexicons.leading:
        if phrase.lower() in lowered:
            violations.append(
                NeutralityViolation(kind="leading_construction", detail=phrase)
            )
    for phrase in lexicons.binding_phrases():
        if " ".join(phrase.lower().split()) in lowered:
            violations.append(NeutralityViolation(kind="binding_language", detail=phrase))
    return violations
