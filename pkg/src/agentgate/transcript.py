"""Dialogue transcript types shared by the tracker, engine, and harness."""

from __future__ import annotations

from dataclasses import dataclass, field

SPEAKER_DELEGATE = "delegate"
SPEAKER_COUNTERPARTY = "counterparty"
SPEAKER_PRINCIPAL = "principal"

SPEAKERS = (SPEAKER_DELEGATE, SPEAKER_COUNTERPARTY, SPEAKER_PRINCIPAL)


@dataclass(frozen=True)
class Message:
    """One transcript entry: `{turn, speaker, text, structured_values?}`."""

    turn: int
    speaker: str
    text: str
    structured_values: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.speaker not in SPEAKERS:
            raise ValueError(f"unknown speaker {self.speaker!r}")
        if self.turn < 0:
            raise ValueError("turn must be non-negative")

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "speaker": self.speaker,
            "text": self.text,
            "structured_values": dict(self.structured_values),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Message":
        return cls(
            turn=raw["turn"],
            speaker=raw["speaker"],
            text=raw["text"],
            structured_values=dict(raw.get("structured_values") or {}),
        )
