"""Task-completeness tracking: field extraction from transcripts, the
completeness ledger (simple and weighted), and stall detection.

The ledger is sticky by design: once a field counts as revealed it never
returns to missing, even if later messages contradict it. Contradictions are
surfaced as ambiguity flags for the engine to act on instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .domain import DomainConfig, FieldSchema
from .transcript import SPEAKER_COUNTERPARTY, Message

SOURCE_PATTERN = "pattern"
SOURCE_MODEL = "model"
SOURCE_AGREEMENT = "agreement"

# A model-only candidate needs headroom above the per-field threshold before
# it counts as revealed without pattern corroboration.
MODEL_ONLY_MARGIN = 0.1


@dataclass(frozen=True)
class Extraction:
    """One extracted field value with its confidence and provenance."""

    field_id: str
    value: str
    confidence: float
    source: str
    turn: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.source not in (SOURCE_PATTERN, SOURCE_MODEL, SOURCE_AGREEMENT):
            raise ValueError(f"unknown extraction source {self.source!r}")


class ModelExtractor(Protocol):
    """Plug point for a model-based extractor; the default is a no-op."""

    def extract(self, history: Sequence[Message], schema: FieldSchema) -> Extraction | None:
        ...


class NullModelExtractor:
    """Default model extractor: never finds anything."""

    def extract(self, history: Sequence[Message], schema: FieldSchema) -> Extraction | None:
        return None


@dataclass(frozen=True)
class RevealedField:
    value: str
    confidence: float
    turn: int

    def to_dict(self) -> dict:
        return {"value": self.value, "confidence": self.confidence, "turn": self.turn}


@dataclass(frozen=True)
class SoftCandidate:
    value: str
    confidence: float

    def to_dict(self) -> dict:
        return {"value": self.value, "confidence": self.confidence}


@dataclass(frozen=True)
class TciLedger:
    """Completeness snapshot after one turn.

    ``tci`` is exactly ``len(revealed) / len(required_fields)``;
    ``tci_weighted`` uses field weights. ``history_of_tci`` carries the
    per-turn series and is non-decreasing by construction.
    """

    revealed: dict[str, RevealedField] = field(default_factory=dict)
    soft_revealed: dict[str, SoftCandidate] = field(default_factory=dict)
    tci: float = 0.0
    tci_weighted: float = 0.0
    missing: tuple[str, ...] = ()
    history_of_tci: tuple[float, ...] = ()
    ambiguities: tuple[str, ...] = ()

    @property
    def revealed_count(self) -> int:
        return len(self.revealed)

    def to_dict(self) -> dict:
        return {
            "revealed": {fid: rf.to_dict() for fid, rf in self.revealed.items()},
            "soft_revealed": {fid: sc.to_dict() for fid, sc in self.soft_revealed.items()},
            "tci": self.tci,
            "tci_weighted": self.tci_weighted,
            "missing": list(self.missing),
            "history_of_tci": list(self.history_of_tci),
            "ambiguities": list(self.ambiguities),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TciLedger":
        return cls(
            revealed={fid: RevealedField(**rf) for fid, rf in raw["revealed"].items()},
            soft_revealed={
                fid: SoftCandidate(**sc) for fid, sc in raw["soft_revealed"].items()
            },
            tci=raw["tci"],
            tci_weighted=raw["tci_weighted"],
            missing=tuple(raw["missing"]),
            history_of_tci=tuple(raw["history_of_tci"]),
            ambiguities=tuple(raw["ambiguities"]),
        )


def _pattern_candidates(history: Sequence[Message], schema: FieldSchema) -> list[Extraction]:
    """All pattern/structured-value candidates in turn order.

    Only counterparty messages are evidence; the delegate's own questions
    must not reveal fields.
    """
    found: list[Extraction] = []
    for message in history:
        if message.speaker != SPEAKER_COUNTERPARTY:
            continue
        if schema.field_id in message.structured_values:
            raw = message.structured_values[schema.field_id]
            found.append(
                Extraction(
                    field_id=schema.field_id,
                    value=str(raw),
                    confidence=1.0,
                    source=SOURCE_PATTERN,
                    turn=message.turn,
                )
            )
        for rule in schema.extraction_patterns:
            if re.search(rule.pattern, message.text, flags=re.IGNORECASE):
                found.append(
                    Extraction(
                        field_id=schema.field_id,
                        value=rule.value,
                        confidence=rule.confidence,
                        source=SOURCE_PATTERN,
                        turn=message.turn,
                    )
                )
    return found


def _best(candidates: list[Extraction]) -> Extraction | None:
    # Highest confidence wins; earlier turn breaks ties for determinism.
    if not candidates:
        return None
    return max(candidates, key=lambda e: (e.confidence, -e.turn))


def extract_candidates(
    history: Sequence[Message],
    schema: FieldSchema,
    model: ModelExtractor | None = None,
    accept_threshold: float = 1.0,
) -> tuple[Extraction | None, Extraction | None]:
    """Dual extraction. Returns ``(accepted, soft_candidate)``.

    Pattern and model extractors run independently. When both find a value:
    agreement yields source="agreement" at the max confidence; disagreement
    yields no accepted value and the stronger candidate as soft. A model-only
    value is accepted only above ``accept_threshold`` + margin.
    """
    pattern_hit = _best(_pattern_candidates(history, schema))
    model_hit = model.extract(history, schema) if model is not None else None

    if pattern_hit is not None and model_hit is not None:
        if pattern_hit.value == model_hit.value:
            return (
                Extraction(
                    field_id=schema.field_id,
                    value=pattern_hit.value,
                    confidence=max(pattern_hit.confidence, model_hit.confidence),
                    source=SOURCE_AGREEMENT,
                    turn=min(pattern_hit.turn, model_hit.turn),
                ),
                None,
            )
        softer = max((pattern_hit, model_hit), key=lambda e: e.confidence)
        return None, softer
    if model_hit is not None:
        if model_hit.confidence >= accept_threshold + MODEL_ONLY_MARGIN:
            return model_hit, None
        return None, model_hit
    return pattern_hit, None


def extract_field(
    history: Sequence[Message],
    schema: FieldSchema,
    model: ModelExtractor | None = None,
) -> Extraction | None:
    """Highest-confidence extraction for one field, or None when nothing
    (or only a disputed candidate) was found."""
    accepted, _ = extract_candidates(history, schema, model=model)
    return accepted


def compute_tci(
    history: Sequence[Message],
    config: DomainConfig,
    prior: TciLedger | None = None,
    model: ModelExtractor | None = None,
) -> TciLedger:
    """Recompute the completeness ledger over a transcript.

    A field counts as revealed when its extraction confidence meets the
    per-field threshold. With ``prior``, previously revealed fields stay
    revealed; a confident later value that disagrees raises an ambiguity flag
    instead of mutating the entry.
    """
    revealed: dict[str, RevealedField] = dict(prior.revealed) if prior else {}
    soft: dict[str, SoftCandidate] = {}
    ambiguities: list[str] = []

    for schema in config.required_fields:
        threshold = config.effective_confidence_threshold(schema)
        accepted, soft_candidate = extract_candidates(
            history, schema, model=model, accept_threshold=threshold
        )
        fid = schema.field_id
        if fid in revealed:
            # Contradiction scan considers every confident candidate, not just
            # the best one; the ledger entry itself never changes.
            current = revealed[fid]
            candidates = _pattern_candidates(history, schema)
            model_hit = model.extract(history, schema) if model is not None else None
            if model_hit is not None:
                candidates.append(model_hit)
            if any(
                c.confidence >= threshold and c.value != current.value
                for c in candidates
            ):
                ambiguities.append(fid)
            continue
        if accepted is not None and accepted.confidence >= threshold:
            revealed[fid] = RevealedField(
                value=accepted.value, confidence=accepted.confidence, turn=accepted.turn
            )
        elif accepted is not None:
            soft[fid] = SoftCandidate(value=accepted.value, confidence=accepted.confidence)
        elif soft_candidate is not None:
            soft[fid] = SoftCandidate(
                value=soft_candidate.value, confidence=soft_candidate.confidence
            )

    total = len(config.required_fields)
    total_weight = sum(schema.weight for schema in config.required_fields)
    revealed_weight = sum(
        schema.weight for schema in config.required_fields if schema.field_id in revealed
    )
    tci = len(revealed) / total
    tci_weighted = revealed_weight / total_weight
    missing = tuple(fid for fid in config.field_ids if fid not in revealed)
    series = (prior.history_of_tci if prior else ()) + (tci,)

    return TciLedger(
        revealed=revealed,
        soft_revealed=soft,
        tci=tci,
        tci_weighted=tci_weighted,
        missing=missing,
        history_of_tci=series,
        ambiguities=tuple(ambiguities),
    )


def _revealed_counts(series: Sequence) -> list[float]:
    counts = []
    for entry in series:
        if isinstance(entry, TciLedger):
            counts.append(float(entry.revealed_count))
        else:
            counts.append(float(entry))
    return counts


def is_stalled(ledger_series: Sequence, k: int) -> bool:
    """True iff the last ``k`` turns produced zero change in revealed count.

    Observing ``k`` turn deltas needs ``k + 1`` snapshots; shorter series are
    not stalled. Accepts ledgers or a bare numeric series.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = _revealed_counts(ledger_series)
    if len(counts) < k + 1:
        return False
    return counts[-1] == counts[-(k + 1)]
