"""Domain configuration: required-field schemas, thresholds, authorization
boundaries, and phrase lexicons.

A domain is described by a single self-contained JSON document (no includes).
Top-level keys are normative: ``domain_id``, ``thresholds``, ``fields``,
``boundaries``, ``lexicons``; unknown keys are rejected at every level so a
config file fully determines behavior.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

PRIOR_TOLERANCE = 1e-9

# Band counts eligible for the banded opening question.
MIN_QUESTION_OPTIONS = 3
MAX_QUESTION_OPTIONS = 5

BOUNDARY_NUMERIC_BAND = "numeric_band"
BOUNDARY_PROHIBITION = "prohibition"

# Built-in phrase lists used when a config does not override them. All
# matching is case-insensitive on normalized whitespace.
DEFAULT_PERSUASION_PHRASES = (
    "limited spots",
    "best choice",
    "act now",
    "once-in-a-lifetime",
    "don't miss out",
    "exclusive offer",
)
DEFAULT_LEADING_PHRASES = (
    "don't you agree",
    "wouldn't you say",
    "surely you",
    "obviously you want",
)
DEFAULT_HOSTILITY_PHRASES = (
    "waste of my time",
    "this is insulting",
    "you people",
    "or else",
)
DEFAULT_MODERATOR_PHRASES = {
    "cooperative": (
        "sounds good",
        "works for me",
        "that works",
        "happy to",
        "sure thing",
    ),
    "adversarial": (
        "or we can't proceed",
        "client list",
        "last chance",
        "take it or leave it",
        "send me your",
        "final offer",
    ),
    "stalled": (
        "let me think",
        "circle back",
        "not sure yet",
        "maybe later",
        "get back to you",
    ),
    "ambiguous": (
        "it depends",
        "hard to say",
        "possibly",
        "one way or another",
    ),
}


class ConfigError(ValueError):
    """Domain config rejected; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ThresholdOrderingError(ConfigError):
    """tau_gate exceeds tau_complete."""


class UnitMismatchError(ValueError):
    """A value's unit does not match the boundary rule's unit."""


@dataclass(frozen=True)
class ExtractionPattern:
    """Regex rule mapping matched text to a field value at fixed confidence."""

    pattern: str
    value: str
    confidence: float

    def __post_init__(self) -> None:
        if not self.pattern:
            raise ConfigError("extraction pattern must be non-empty", key="pattern")
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigError(
                f"pattern confidence {self.confidence} outside [0, 1]", key="confidence"
            )

    def to_dict(self) -> dict:
        return {"pattern": self.pattern, "value": self.value, "confidence": self.confidence}


@dataclass(frozen=True)
class UtilityScale:
    """Per-field linear rescaling of agreed values onto [0, 1].

    ``direction`` is the principal-preferred direction: "maximize" means
    higher agreed values score higher, "minimize" the reverse.
    """

    direction: str
    low: float
    high: float

    def __post_init__(self) -> None:
        if self.direction not in ("maximize", "minimize"):
            raise ConfigError(f"unknown utility direction {self.direction!r}", key="direction")
        if not self.low < self.high:
            raise ConfigError("utility scale requires low < high", key="low")

    def score(self, value: float) -> float:
        frac = (value - self.low) / (self.high - self.low)
        if self.direction == "minimize":
            frac = 1.0 - frac
        return min(1.0, max(0.0, frac))

    def to_dict(self) -> dict:
        return {"direction": self.direction, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class FieldSchema:
    """One required checklist field with its answer bands and priors."""

    field_id: str
    bands: tuple[str, ...]
    question: str
    weight: float = 1.0
    prior: tuple[float, ...] = ()
    safety_critical: bool = False
    bands_from_range: bool = False
    risk: float = 0.0
    unit: str | None = None
    confidence_threshold: float | None = None
    utility: UtilityScale | None = None
    extraction_patterns: tuple[ExtractionPattern, ...] = ()

    def __post_init__(self) -> None:
        if not self.field_id:
            raise ConfigError("field_id must be non-empty", key="field_id")
        if len(self.bands) < 2:
            raise ConfigError(
                f"field {self.field_id!r} needs at least 2 bands", key="bands"
            )
        if len(set(self.bands)) != len(self.bands):
            raise ConfigError(f"field {self.field_id!r} has duplicate bands", key="bands")
        if not 0.0 < self.weight <= 1.0:
            raise ConfigError(
                f"field {self.field_id!r} weight {self.weight} outside (0, 1]", key="weight"
            )
        if not 0.0 <= self.risk <= 1.0:
            raise ConfigError(f"field {self.field_id!r} risk outside [0, 1]", key="risk")
        if not self.prior:
            uniform = 1.0 / len(self.bands)
            object.__setattr__(self, "prior", tuple(uniform for _ in self.bands))
        if len(self.prior) != len(self.bands):
            raise ConfigError(
                f"field {self.field_id!r} prior length {len(self.prior)} != "
                f"{len(self.bands)} bands",
                key="prior",
            )
        if any(p < 0 for p in self.prior):
            raise ConfigError(f"field {self.field_id!r} prior has negative mass", key="prior")
        if not math.isclose(sum(self.prior), 1.0, abs_tol=PRIOR_TOLERANCE):
            raise ConfigError(
                f"field {self.field_id!r} prior sums to {sum(self.prior)}, not 1", key="prior"
            )
        if self.confidence_threshold is not None and not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError(
                f"field {self.field_id!r} confidence_threshold outside [0, 1]",
                key="confidence_threshold",
            )

    @property
    def question_eligible(self) -> bool:
        """Whether this field can be posed as a banded multiple-choice question."""
        return MIN_QUESTION_OPTIONS <= len(self.bands) <= MAX_QUESTION_OPTIONS

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "field_id": self.field_id,
            "bands": list(self.bands),
            "question": self.question,
            "weight": self.weight,
            "prior": list(self.prior),
            "safety_critical": self.safety_critical,
            "bands_from_range": self.bands_from_range,
            "risk": self.risk,
        }
        if self.unit is not None:
            doc["unit"] = self.unit
        if self.confidence_threshold is not None:
            doc["confidence_threshold"] = self.confidence_threshold
        if self.utility is not None:
            doc["utility"] = self.utility.to_dict()
        if self.extraction_patterns:
            doc["patterns"] = [p.to_dict() for p in self.extraction_patterns]
        return doc


@dataclass(frozen=True)
class BoundaryRule:
    """Authorization boundary: a closed numeric band or a text prohibition."""

    rule_id: str
    kind: str
    field_id: str | None = None
    min_value: float | None = None
    max_value: float | None = None
    unit: str | None = None
    patterns: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == BOUNDARY_NUMERIC_BAND:
            if self.field_id is None:
                raise ConfigError(
                    f"numeric_band rule {self.rule_id!r} needs field_id", key="field_id"
                )
            if self.min_value is None or self.max_value is None:
                raise ConfigError(
                    f"numeric_band rule {self.rule_id!r} needs min_value and max_value",
                    key="min_value",
                )
            if self.min_value > self.max_value:
                raise ConfigError(
                    f"numeric_band rule {self.rule_id!r} has min_value > max_value",
                    key="min_value",
                )
        elif self.kind == BOUNDARY_PROHIBITION:
            if not self.patterns:
                raise ConfigError(
                    f"prohibition rule {self.rule_id!r} needs a non-empty pattern set",
                    key="patterns",
                )
        else:
            raise ConfigError(f"unknown boundary kind {self.kind!r}", key="kind")

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {"rule_id": self.rule_id, "kind": self.kind}
        if self.kind == BOUNDARY_NUMERIC_BAND:
            doc["field_id"] = self.field_id
            doc["min_value"] = self.min_value
            doc["max_value"] = self.max_value
            if self.unit is not None:
                doc["unit"] = self.unit
        else:
            doc["patterns"] = list(self.patterns)
        return doc


@dataclass(frozen=True)
class BindingPhrase:
    """A binding phrase and its optional non-binding rewrite template."""

    phrase: str
    rewrite: str | None = None

    def __post_init__(self) -> None:
        if not self.phrase.strip():
            raise ConfigError("binding phrase must be non-empty", key="binding")

    def to_dict(self) -> Any:
        if self.rewrite is None:
            return self.phrase
        return {"phrase": self.phrase, "rewrite": self.rewrite}


@dataclass(frozen=True)
class Lexicons:
    """Phrase lists driving commitment detection, neutrality checks, and the
    default moderator. ``binding``/``nonbinding`` are required; the rest fall
    back to built-in defaults."""

    binding: tuple[BindingPhrase, ...]
    nonbinding: tuple[str, ...]
    persuasion: tuple[str, ...] = DEFAULT_PERSUASION_PHRASES
    leading: tuple[str, ...] = DEFAULT_LEADING_PHRASES
    hostility: tuple[str, ...] = DEFAULT_HOSTILITY_PHRASES
    moderator: dict = field(default_factory=lambda: dict(DEFAULT_MODERATOR_PHRASES))

    def __post_init__(self) -> None:
        if not self.binding:
            raise ConfigError("binding lexicon must be non-empty", key="binding")
        if not self.nonbinding:
            raise ConfigError("nonbinding lexicon must be non-empty", key="nonbinding")

    def binding_phrases(self) -> tuple[str, ...]:
        return tuple(entry.phrase for entry in self.binding)

    def rewrite_for(self, phrase: str) -> str | None:
        lowered = phrase.lower()
        for entry in self.binding:
            if entry.phrase.lower() == lowered:
                return entry.rewrite
        return None

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "binding": [entry.to_dict() for entry in self.binding],
            "nonbinding": list(self.nonbinding),
        }
        if self.persuasion != DEFAULT_PERSUASION_PHRASES:
            doc["persuasion"] = list(self.persuasion)
        if self.leading != DEFAULT_LEADING_PHRASES:
            doc["leading"] = list(self.leading)
        if self.hostility != DEFAULT_HOSTILITY_PHRASES:
            doc["hostility"] = list(self.hostility)
        if self.moderator != DEFAULT_MODERATOR_PHRASES:
            doc["moderator"] = {label: list(v) for label, v in self.moderator.items()}
        return doc


@dataclass(frozen=True)
class DomainConfig:
    """Everything one domain needs: fields, thresholds, boundaries, lexicons.

    Immutable after load; safe to share read-only across concurrent sessions.
    """

    domain_id: str
    required_fields: tuple[FieldSchema, ...]
    tau_gate: float
    tau_complete: float
    confidence_threshold: float
    stall_k: int
    max_rounds: int
    boundaries: tuple[BoundaryRule, ...]
    lexicons: Lexicons

    def __post_init__(self) -> None:
        if not 0.0 < self.tau_gate <= 1.0:
            raise ConfigError(f"tau_gate {self.tau_gate} outside (0, 1]", key="tau_gate")
        if not 0.0 < self.tau_complete <= 1.0:
            raise ConfigError(
                f"tau_complete {self.tau_complete} outside (0, 1]", key="tau_complete"
            )
        if self.tau_gate > self.tau_complete:
            raise ThresholdOrderingError(
                f"tau_gate {self.tau_gate} > tau_complete {self.tau_complete}",
                key="tau_gate",
            )
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError(
                f"confidence threshold {self.confidence_threshold} outside [0, 1]",
                key="confidence",
            )
        if self.stall_k < 1:
            raise ConfigError(f"stall_k {self.stall_k} must be >= 1", key="stall_k")
        if self.max_rounds < 1:
            raise ConfigError(f"max_rounds {self.max_rounds} must be >= 1", key="max_rounds")
        if not self.required_fields:
            raise ConfigError("fields must be non-empty", key="fields")
        ids = [schema.field_id for schema in self.required_fields]
        if len(set(ids)) != len(ids):
            dupes = sorted({fid for fid in ids if ids.count(fid) > 1})
            raise ConfigError(f"duplicate field ids {dupes}", key="fields")

    @property
    def field_ids(self) -> tuple[str, ...]:
        return tuple(schema.field_id for schema in self.required_fields)

    def schema_for(self, field_id: str) -> FieldSchema:
        for schema in self.required_fields:
            if schema.field_id == field_id:
                return schema
        raise KeyError(field_id)

    def effective_confidence_threshold(self, schema: FieldSchema) -> float:
        """Per-field threshold: explicit override, else 0.8 for safety-critical
        fields, else the domain-wide threshold."""
        if schema.confidence_threshold is not None:
            return schema.confidence_threshold
        if schema.safety_critical:
            return max(self.confidence_threshold, 0.8)
        return self.confidence_threshold

    def numeric_boundaries(self) -> tuple[BoundaryRule, ...]:
        return tuple(r for r in self.boundaries if r.kind == BOUNDARY_NUMERIC_BAND)

    def prohibitions(self) -> tuple[BoundaryRule, ...]:
        return tuple(r for r in self.boundaries if r.kind == BOUNDARY_PROHIBITION)

    def to_dict(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "thresholds": {
                "tau_gate": self.tau_gate,
                "tau_complete": self.tau_complete,
                "confidence": self.confidence_threshold,
                "stall_k": self.stall_k,
                "max_rounds": self.max_rounds,
            },
            "fields": [schema.to_dict() for schema in self.required_fields],
            "boundaries": [rule.to_dict() for rule in self.boundaries],
            "lexicons": self.lexicons.to_dict(),
        }


def check_value_in_band(rule: BoundaryRule, value: float, unit: str | None = None) -> bool:
    """True iff ``min_value <= value <= max_value`` (closed interval).

    Both endpoints are authorized: an offer at the top of the approved band is
    within bounds. Raises ``UnitMismatchError`` when an explicit unit
    disagrees with the rule's unit.
    """
    if rule.kind != BOUNDARY_NUMERIC_BAND:
        raise ValueError(f"rule {rule.rule_id!r} is not a numeric band")
    if unit is not None and rule.unit is not None and unit != rule.unit:
        raise UnitMismatchError(
            f"value unit {unit!r} does not match rule unit {rule.unit!r}"
        )
    assert rule.min_value is not None and rule.max_value is not None
    return rule.min_value <= value <= rule.max_value


# ---------------------------------------------------------------------------
# Config document parsing


def _require_keys(raw: dict, allowed: set[str], required: set[str], where: str) -> None:
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}", key=key)
    for key in required:
        if key not in raw:
            raise ConfigError(f"missing key {key!r} in {where}", key=key)


def _parse_pattern(raw: dict, where: str) -> ExtractionPattern:
    _require_keys(raw, {"pattern", "value", "confidence"}, {"pattern", "value", "confidence"}, where)
    return ExtractionPattern(
        pattern=raw["pattern"], value=str(raw["value"]), confidence=float(raw["confidence"])
    )


_FIELD_KEYS = {
    "field_id",
    "bands",
    "question",
    "weight",
    "prior",
    "safety_critical",
    "bands_from_range",
    "risk",
    "unit",
    "confidence_threshold",
    "utility",
    "patterns",
}


def _parse_field(raw: dict, index: int) -> FieldSchema:
    where = f"fields[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object", key="fields")
    _require_keys(raw, _FIELD_KEYS, {"field_id", "bands", "question"}, where)
    utility = None
    if "utility" in raw:
        util_raw = raw["utility"]
        _require_keys(util_raw, {"direction", "low", "high"}, {"direction", "low", "high"},
                      f"{where}.utility")
        utility = UtilityScale(
            direction=util_raw["direction"],
            low=float(util_raw["low"]),
            high=float(util_raw["high"]),
        )
    patterns = tuple(
        _parse_pattern(p, f"{where}.patterns[{i}]")
        for i, p in enumerate(raw.get("patterns", []))
    )
    return FieldSchema(
        field_id=raw["field_id"],
        bands=tuple(str(b) for b in raw["bands"]),
        question=raw["question"],
        weight=float(raw.get("weight", 1.0)),
        prior=tuple(float(p) for p in raw.get("prior", [])),
        safety_critical=bool(raw.get("safety_critical", False)),
        bands_from_range=bool(raw.get("bands_from_range", False)),
        risk=float(raw.get("risk", 0.0)),
        unit=raw.get("unit"),
        confidence_threshold=(
            float(raw["confidence_threshold"]) if "confidence_threshold" in raw else None
        ),
        utility=utility,
        extraction_patterns=patterns,
    )


_BOUNDARY_KEYS = {"rule_id", "kind", "field_id", "min_value", "max_value", "unit", "patterns"}


def _parse_boundary(raw: dict, index: int) -> BoundaryRule:
    where = f"boundaries[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object", key="boundaries")
    _require_keys(raw, _BOUNDARY_KEYS, {"rule_id", "kind"}, where)
    return BoundaryRule(
        rule_id=raw["rule_id"],
        kind=raw["kind"],
        field_id=raw.get("field_id"),
        min_value=float(raw["min_value"]) if "min_value" in raw else None,
        max_value=float(raw["max_value"]) if "max_value" in raw else None,
        unit=raw.get("unit"),
        patterns=tuple(raw.get("patterns", [])),
    )


_LEXICON_KEYS = {"binding", "nonbinding", "persuasion", "leading", "hostility", "moderator"}


def _parse_binding_entry(raw: Any, index: int) -> BindingPhrase:
    if isinstance(raw, str):
        return BindingPhrase(phrase=raw)
    where = f"lexicons.binding[{index}]"
    _require_keys(raw, {"phrase", "rewrite"}, {"phrase"}, where)
    return BindingPhrase(phrase=raw["phrase"], rewrite=raw.get("rewrite"))


def _parse_lexicons(raw: dict) -> Lexicons:
    _require_keys(raw, _LEXICON_KEYS, {"binding", "nonbinding"}, "lexicons")
    kwargs: dict[str, Any] = {
        "binding": tuple(_parse_binding_entry(e, i) for i, e in enumerate(raw["binding"])),
        "nonbinding": tuple(raw["nonbinding"]),
    }
    for optional in ("persuasion", "leading", "hostility"):
        if optional in raw:
            kwargs[optional] = tuple(raw[optional])
    if "moderator" in raw:
        kwargs["moderator"] = {label: tuple(v) for label, v in raw["moderator"].items()}
    return Lexicons(**kwargs)


_THRESHOLD_KEYS = {"tau_gate", "tau_complete", "confidence", "stall_k", "max_rounds"}
_TOP_KEYS = {"domain_id", "thresholds", "fields", "boundaries", "lexicons"}


def load_domain_config(source: dict | str | Path) -> DomainConfig:
    """Parse and validate a domain config document.

    ``source`` may be a parsed tree, a JSON string, or a path to a JSON file.
    Raises ``ConfigError`` naming the offending key on schema violations and
    ``ThresholdOrderingError`` when tau_gate > tau_complete.
    """
    if isinstance(source, Path):
        raw = json.loads(source.read_text())
    elif isinstance(source, str):
        candidate = Path(source)
        if candidate.suffix == ".json" and candidate.exists():
            raw = json.loads(candidate.read_text())
        else:
            raw = json.loads(source)
    else:
        raw = source
    if not isinstance(raw, dict):
        raise ConfigError("config document must be an object", key="<root>")

    _require_keys(raw, _TOP_KEYS, _TOP_KEYS, "config")
    thresholds = raw["thresholds"]
    _require_keys(thresholds, _THRESHOLD_KEYS, _THRESHOLD_KEYS, "thresholds")

    fields = tuple(_parse_field(f, i) for i, f in enumerate(raw["fields"]))
    boundaries = tuple(_parse_boundary(b, i) for i, b in enumerate(raw["boundaries"]))
    lexicons = _parse_lexicons(raw["lexicons"])

    return DomainConfig(
        domain_id=raw["domain_id"],
        required_fields=fields,
        tau_gate=float(thresholds["tau_gate"]),
        tau_complete=float(thresholds["tau_complete"]),
        confidence_threshold=float(thresholds["confidence"]),
        stall_k=int(thresholds["stall_k"]),
        max_rounds=int(thresholds["max_rounds"]),
        boundaries=boundaries,
        lexicons=lexicons,
    )


def serialize_domain_config(config: DomainConfig) -> str:
    """Render a config back to its JSON document form (round-trip stable)."""
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
