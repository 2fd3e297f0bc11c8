"""Feedback-channel merging: human corrections, safety signals, and critic
suggestions folded into one bounded plan for the next delegate turn.

Precedence is strict: human directives, then safety signals, then critic
clarity items, then other critic categories, with persuasion last. The plan
never exceeds its token budget; persuasion and low-ranked critic items are
compressed or dropped first, and every excluded item gets a record naming it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

CHANNEL_HUMAN = "human"
CHANNEL_SAFETY = "safety"
CHANNEL_CRITIC = "critic"
CHANNELS = (CHANNEL_HUMAN, CHANNEL_SAFETY, CHANNEL_CRITIC)

CATEGORY_CLARITY = "clarity"
CATEGORY_PERSUASION = "persuasion"
CATEGORY_CONSTRAINT = "constraint"
CATEGORY_WARNING = "warning"
CATEGORIES = (CATEGORY_CLARITY, CATEGORY_PERSUASION, CATEGORY_CONSTRAINT, CATEGORY_WARNING)

STATUS_ACTIVE = "active"
STATUS_COMPRESSED = "compressed"
STATUS_DROPPED = "dropped"
STATUS_LOGGED_IGNORED = "logged_ignored"

# At most this many active critic items per category (diversity cap).
CRITIC_CATEGORY_CAP = 2

# Items older than this with low recency x relevance are compressed.
STALE_AGE_TURNS = 5
DECAY_SCORE_THRESHOLD = 0.1

COMPRESSED_STUB_CHARS = 40


class BudgetStarvationError(RuntimeError):
    """Human + safety items cannot fit the budget even after compression."""


def token_cost(text: str) -> int:
    """Deterministic stand-in for a tokenizer: ceil(chars / 4)."""
    return math.ceil(len(text) / 4)


@dataclass
class FeedbackItem:
    """One directive from a feedback channel.

    ``constrains``/``directive`` carry the field a directive binds and the
    stance it takes, so conflicting directives on the same field can be
    detected.
    """

    item_id: str
    channel: str
    category: str
    text: str
    relevance: float = 1.0
    actionability: float = 1.0
    turn_created: int = 0
    cost_tokens: int = 0
    status: str = STATUS_ACTIVE
    constrains: str | None = None
    directive: str | None = None

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if not 0.0 <= self.relevance <= 1.0:
            raise ValueError("relevance outside [0, 1]")
        if not 0.0 <= self.actionability <= 1.0:
            raise ValueError("actionability outside [0, 1]")
        if self.cost_tokens == 0:
            self.cost_tokens = token_cost(self.text)
        if self.status == STATUS_ACTIVE and self.cost_tokens <= 0:
            raise ValueError("active items must have positive token cost")

    @property
    def precedence_class(self) -> int:
        """0 human, 1 safety, 2 critic clarity, 3 other critic, 4 persuasion."""
        if self.channel == CHANNEL_HUMAN:
            return 0
        if self.channel == CHANNEL_SAFETY:
            return 1
        if self.category == CATEGORY_CLARITY:
            return 2
        if self.category == CATEGORY_PERSUASION:
            return 4
        return 3

    @property
    def rank_score(self) -> float:
        return self.relevance * self.actionability

    def compress(self) -> None:
        """Replace the text with a short stub; human/safety stay verbatim-able
        but may be compressed only as a last resort before starvation."""
        if len(self.text) > COMPRESSED_STUB_CHARS:
            self.text = self.text[:COMPRESSED_STUB_CHARS].rstrip() + "..."
        self.cost_tokens = token_cost(self.text)
        self.status = STATUS_COMPRESSED

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "channel": self.channel,
            "category": self.category,
            "text": self.text,
            "relevance": self.relevance,
            "actionability": self.actionability,
            "turn_created": self.turn_created,
            "cost_tokens": self.cost_tokens,
            "status": self.status,
            "constrains": self.constrains,
            "directive": self.directive,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FeedbackItem":
        return cls(**raw)


@dataclass(frozen=True)
class ConflictRecord:
    winner_id: str
    loser_id: str
    rule: str

    def to_dict(self) -> dict:
        return {"winner": self.winner_id, "loser": self.loser_id, "rule": self.rule}


@dataclass(frozen=True)
class ExclusionRecord:
    """Why an item is absent from the plan (budget, gate, or diversity cap)."""

    item_id: str
    reason: str

    def to_dict(self) -> dict:
        return {"item": self.item_id, "reason": self.reason}


@dataclass
class MergedPlan:
    directives: list[FeedbackItem]
    total_cost_tokens: int
    conflicts_resolved: list[ConflictRecord]
    exclusions: list[ExclusionRecord]
    escalation_required: bool = False

    def critic_tail_tokens(self) -> int:
        """Tokens consumed by admitted critic items outside the clarity class."""
        return sum(
            item.cost_tokens
            for item in self.directives
            if item.channel == CHANNEL_CRITIC and item.category != CATEGORY_CLARITY
        )

    def to_dict(self) -> dict:
        return {
            "directives": [item.item_id for item in self.directives],
            "total_cost_tokens": self.total_cost_tokens,
            "conflicts_resolved": [record.to_dict() for record in self.conflicts_resolved],
            "exclusions": [record.to_dict() for record in self.exclusions],
            "escalation_required": self.escalation_required,
        }


@dataclass(frozen=True)
class ConflictOutcome:
    kept: list[FeedbackItem]
    records: list[ConflictRecord]
    escalation_required: bool


def _conflicts(a: FeedbackItem, b: FeedbackItem) -> bool:
    if a.constrains is None or b.constrains is None:
        return False
    if a.constrains != b.constrains:
        return False
    return (a.directive or "") != (b.directive or "")


def resolve_conflicts(items: Sequence[FeedbackItem]) -> ConflictOutcome:
    """Drop the losing side of every same-field conflict.

    Higher precedence class wins; equal classes keep the more recent item.
    Safety is non-negotiable: a human-vs-safety conflict keeps the safety
    signal and marks the outcome escalation-required, as does any conflict a
    safety signal wins against the critic.
    """
    losers: dict[str, ConflictRecord] = {}
    escalation = False
    ordered = list(items)
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            if a.item_id in losers or b.item_id in losers:
                continue
            if not _conflicts(a, b):
                continue
            pair = {a.channel, b.channel}
            if pair == {CHANNEL_HUMAN, CHANNEL_SAFETY}:
                winner, loser = (a, b) if a.channel == CHANNEL_SAFETY else (b, a)
                rule = "safety_non_negotiable"
                escalation = True
            elif a.precedence_class != b.precedence_class:
                winner, loser = (
                    (a, b) if a.precedence_class < b.precedence_class else (b, a)
                )
                rule = "precedence"
                if winner.channel == CHANNEL_SAFETY and loser.channel == CHANNEL_CRITIC:
                    rule = "safety_over_critic"
                    escalation = True
            else:
                winner, loser = (
                    (a, b) if a.turn_created >= b.turn_created else (b, a)
                )
                rule = "recency"
            loser.status = STATUS_LOGGED_IGNORED
            losers[loser.item_id] = ConflictRecord(
                winner_id=winner.item_id, loser_id=loser.item_id, rule=rule
            )
    kept = [item for item in ordered if item.item_id not in losers]
    return ConflictOutcome(
        kept=kept, records=list(losers.values()), escalation_required=escalation
    )


def _ranked_critic(items: Iterable[FeedbackItem]) -> list[FeedbackItem]:
    # Stable: equal scores keep input order.
    return sorted(items, key=lambda item: -item.rank_score)


def merge_channels(
    critic: Sequence[FeedbackItem],
    human: Sequence[FeedbackItem],
    safety: Sequence[FeedbackItem],
    budget_tokens: int,
    tci_gate_met: bool,
) -> MergedPlan:
    """Build the bounded, precedence-ordered plan for the next turn.

    Human and safety items are admitted first (verbatim when possible), then
    critic items by class and rank under the per-category diversity cap.
    Persuasion items are excluded entirely until the information gate is met.
    Raises ``BudgetStarvationError`` when human + safety alone cannot fit.
    """
    if budget_tokens < 1:
        raise ValueError("budget must be positive")

    exclusions: list[ExclusionRecord] = []

    human_items = [item for item in human if item.status != STATUS_DROPPED]
    safety_items = [item for item in safety if item.status != STATUS_DROPPED]
    critic_items = [
        item for item in critic if item.status in (STATUS_ACTIVE, STATUS_COMPRESSED)
    ]

    if not tci_gate_met:
        # No persuasion in the plan before the information gate, from any
        # stream. Critic items are dropped; human/safety stay active but sit
        # out this turn.
        gated: list[FeedbackItem] = []
        for item in human_items + safety_items + critic_items:
            if item.category == CATEGORY_PERSUASION:
                if item.channel == CHANNEL_CRITIC:
                    item.status = STATUS_DROPPED
                exclusions.append(ExclusionRecord(item.item_id, "persuasion_gated"))
                gated.append(item)
        human_items = [item for item in human_items if item not in gated]
        safety_items = [item for item in safety_items if item not in gated]
        critic_items = [item for item in critic_items if item not in gated]

    capped: list[FeedbackItem] = []
    per_category: dict[str, int] = {}
    diverse: list[FeedbackItem] = []
    for item in _ranked_critic(critic_items):
        count = per_category.get(item.category, 0)
        if count >= CRITIC_CATEGORY_CAP:
            item.status = STATUS_DROPPED
            exclusions.append(ExclusionRecord(item.item_id, "diversity_capped"))
            capped.append(item)
            continue
        per_category[item.category] = count + 1
        diverse.append(item)

    prioritized = (
        list(human_items)
        + list(safety_items)
        + sorted(diverse, key=lambda item: (item.precedence_class, -item.rank_score))
    )
    outcome = resolve_conflicts(prioritized)

    kept_human = [i for i in outcome.kept if i.channel == CHANNEL_HUMAN]
    kept_safety = [i for i in outcome.kept if i.channel == CHANNEL_SAFETY]
    kept_critic = [i for i in outcome.kept if i.channel == CHANNEL_CRITIC]

    mandatory_cost = sum(i.cost_tokens for i in kept_human + kept_safety)
    if mandatory_cost > budget_tokens:
        # Last resort before starving: compress safety, then human.
        for item in kept_safety + kept_human:
            if mandatory_cost <= budget_tokens:
                break
            before = item.cost_tokens
            item.compress()
            mandatory_cost -= before - item.cost_tokens
        if mandatory_cost > budget_tokens:
            raise BudgetStarvationError(
                f"human+safety items need {mandatory_cost} tokens, budget {budget_tokens}"
            )

    admitted: list[FeedbackItem] = list(kept_human) + list(kept_safety)
    spent = mandatory_cost
    for item in kept_critic:
        if spent + item.cost_tokens <= budget_tokens:
            admitted.append(item)
            spent += item.cost_tokens
            continue
        item.compress()
        if spent + item.cost_tokens <= budget_tokens:
            admitted.append(item)
            spent += item.cost_tokens
        else:
            item.status = STATUS_DROPPED
            exclusions.append(ExclusionRecord(item.item_id, "budget_dropped"))

    return MergedPlan(
        directives=admitted,
        total_cost_tokens=spent,
        conflicts_resolved=outcome.records,
        exclusions=exclusions,
        escalation_required=outcome.escalation_required,
    )


def decay_stale(
    items: Sequence[FeedbackItem], current_turn: int
) -> list[FeedbackItem]:
    """Compress stale low-relevance items; human and safety never decay."""
    result = list(items)
    for item in result:
        if item.channel in (CHANNEL_HUMAN, CHANNEL_SAFETY):
            continue
        if item.status != STATUS_ACTIVE:
            continue
        age = current_turn - item.turn_created
        if age <= STALE_AGE_TURNS:
            continue
        recency = 1.0 / (1.0 + age)
        if recency * item.relevance < DECAY_SCORE_THRESHOLD:
            item.compress()
    return result


class FeedbackStore:
    """Per-session item store with conflict history for repeat detection."""

    def __init__(self) -> None:
        self.items: list[FeedbackItem] = []
        self._conflict_turns: dict[str, set[int]] = {}
        self._seq = 0

    def next_id(self, prefix: str) -> str:
        self._seq += 1
        return f"{prefix}-{self._seq}"

    def add(self, item: FeedbackItem) -> None:
        self.items.append(item)

    def by_channel(self, channel: str) -> list[FeedbackItem]:
        return [
            item
            for item in self.items
            if item.channel == channel
            and item.status in (STATUS_ACTIVE, STATUS_COMPRESSED)
        ]

    def record_human_critic_conflicts(
        self, records: Sequence[ConflictRecord], turn: int
    ) -> None:
        by_id = {item.item_id: item for item in self.items}
        for record in records:
            winner = by_id.get(record.winner_id)
            loser = by_id.get(record.loser_id)
            if winner is None or loser is None:
                continue
            channels = {winner.channel, loser.channel}
            if channels == {CHANNEL_HUMAN, CHANNEL_CRITIC}:
                field_id = winner.constrains or loser.constrains or "<unknown>"
                self._conflict_turns.setdefault(field_id, set()).add(turn)

    def repeated_conflict_fields(self, min_turns: int = 2) -> list[str]:
        """Fields where human and critic clashed on >= min_turns distinct turns."""
        return sorted(
            fid for fid, turns in self._conflict_turns.items() if len(turns) >= min_turns
        )

    def to_dict(self) -> dict:
        return {
            "items": [item.to_dict() for item in self.items],
            "conflict_turns": {
                fid: sorted(turns) for fid, turns in self._conflict_turns.items()
            },
            "seq": self._seq,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FeedbackStore":
        store = cls()
        store.items = [FeedbackItem.from_dict(item) for item in raw["items"]]
        store._conflict_turns = {
            fid: set(turns) for fid, turns in raw["conflict_turns"].items()
        }
        store._seq = raw["seq"]
        return store
