from __future__ import annotations

import pytest

from agentgate.domain import (
    BindingPhrase,
    BoundaryRule,
    DomainConfig,
    ExtractionPattern,
    FieldSchema,
    Lexicons,
)
from agentgate.resources import load_config_ref
from agentgate.transcript import SPEAKER_COUNTERPARTY, Message


@pytest.fixture(scope="session")
def staffing_config() -> DomainConfig:
    return load_config_ref("staffing")


@pytest.fixture(scope="session")
def contractor_config() -> DomainConfig:
    return load_config_ref("contractor")


@pytest.fixture(scope="session")
def procurement_config() -> DomainConfig:
    return load_config_ref("procurement")


def basic_lexicons() -> Lexicons:
    return Lexicons(
        binding=(
            BindingPhrase("we commit to", "we're exploring"),
            BindingPhrase("we agree to", "we're open to exploring"),
            BindingPhrase("we guarantee", "we aim for"),
        ),
        nonbinding=(
            "subject to approval",
            "we're exploring",
            "we're open to exploring",
            "we aim for",
            "we can explore",
        ),
    )


def make_field(field_id: str, n_bands: int = 4, **kwargs) -> FieldSchema:
    defaults = dict(
        bands=tuple(f"{field_id}_band_{i}" for i in range(n_bands)),
        question=f"Which option describes {field_id}?",
    )
    defaults.update(kwargs)
    return FieldSchema(field_id=field_id, **defaults)


def make_config(
    fields,
    boundaries=(),
    domain_id="test",
    tau_gate=0.7,
    tau_complete=0.85,
    confidence=0.7,
    stall_k=3,
    max_rounds=20,
    lexicons=None,
) -> DomainConfig:
    return DomainConfig(
        domain_id=domain_id,
        required_fields=tuple(fields),
        tau_gate=tau_gate,
        tau_complete=tau_complete,
        confidence_threshold=confidence,
        stall_k=stall_k,
        max_rounds=max_rounds,
        boundaries=tuple(boundaries),
        lexicons=lexicons or basic_lexicons(),
    )


def counterparty_says(*texts_or_pairs) -> list[Message]:
    """Build a counterparty-only history from strings or (text, values)."""
    history = []
    for i, entry in enumerate(texts_or_pairs):
        if isinstance(entry, tuple):
            text, values = entry
        else:
            text, values = entry, {}
        history.append(
            Message(
                turn=i, speaker=SPEAKER_COUNTERPARTY, text=text, structured_values=values
            )
        )
    return history


def six_field_config() -> DomainConfig:
    """The canonical six-field checklist used in completeness examples."""
    fields = [
        FieldSchema(
            field_id="work_auth",
            bands=("U.S. citizen", "Green card", "Needs sponsorship"),
            question="What is your work authorization status?",
            extraction_patterns=(
                ExtractionPattern(
                    pattern=r"(?:\bu\.?s\.?|united states)\s+citizen",
                    value="U.S. citizen",
                    confidence=0.95,
                ),
            ),
        ),
        FieldSchema(
            field_id="timezone",
            bands=("6+ hours", "3-5 hours", "Under 3 hours"),
            question="How much time-zone overlap can you cover?",
            extraction_patterns=(
                ExtractionPattern(
                    pattern=r"overlap\s+6\s+hours", value="6+ hours", confidence=0.9
                ),
            ),
        ),
        FieldSchema(
            field_id="start_date",
            bands=("Within 1 month", "1-3 months", "Later"),
            question="When can you start?",
        ),
        FieldSchema(
            field_id="compensation",
            bands=("Under $80K", "$80K-$100K", "Over $100K"),
            question="What compensation range are you targeting?",
        ),
        FieldSchema(
            field_id="skills",
            bands=("Python + React", "Python only", "Other"),
            question="What are your core skills?",
        ),
        FieldSchema(
            field_id="role_level",
            bands=("Junior", "Mid-level", "Senior"),
            question="What role level are you seeking?",
            extraction_patterns=(
                ExtractionPattern(pattern=r"\bsenior\b", value="Senior", confidence=0.85),
            ),
        ),
    ]
    return make_config(fields, domain_id="staffing_six")


def usd_band(low: float, high: float, field_id: str = "compensation",
             rule_id: str = "band") -> BoundaryRule:
    return BoundaryRule(
        rule_id=rule_id,
        kind="numeric_band",
        field_id=field_id,
        min_value=low,
        max_value=high,
        unit="USD",
    )
