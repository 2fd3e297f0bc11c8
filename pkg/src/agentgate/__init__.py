"""agentgate: a deterministic governance engine for delegated
screening-and-negotiation dialogues.

The engine gates phase progression on information completeness, merges human
and automated feedback under strict precedence, blocks unauthorized
commitments before they leave the building, and escalates boundary events to
a human principal, with a gapless audit trail throughout.
"""

from .domain import (
    BoundaryRule,
    ConfigError,
    DomainConfig,
    FieldSchema,
    Lexicons,
    ThresholdOrderingError,
    check_value_in_band,
    load_domain_config,
    serialize_domain_config,
)
from .engine import (
    AuditEvent,
    AuditLog,
    CounterpartyMessage,
    Engine,
    PrincipalDecision,
    PrincipalFeedback,
    ProtocolState,
    SessionStart,
    SessionState,
    Timeout,
)
from .feedback import FeedbackItem, MergedPlan, decay_stale, merge_channels, resolve_conflicts
from .metrics import MetricsReport, compute_metrics, scan_trace
from .personas import Persona, build_persona, fuzz_persona
from .safety import (
    DraftMessage,
    EscalationOption,
    EscalationPayload,
    SafetyVerdict,
    build_escalation_payload,
    contains_binding_language,
    moderator_classify,
    preflight,
    rewrite_non_binding,
)
from .simulate import PrincipalPolicy, build_policy, run_scenario
from .stcc import (
    BeliefState,
    QuestionDraft,
    build_stcc_question,
    expected_ig,
    rank_attributes,
    validate_neutral_compliance,
)
from .suite import SuiteSpec, run_suite
from .tci import Extraction, TciLedger, compute_tci, extract_field, is_stalled
from .transcript import Message

__version__ = "0.1.0"

__all__ = [
    "AuditEvent",
    "AuditLog",
    "BeliefState",
    "BoundaryRule",
    "ConfigError",
    "CounterpartyMessage",
    "DomainConfig",
    "DraftMessage",
    "Engine",
    "EscalationOption",
    "EscalationPayload",
    "Extraction",
    "FeedbackItem",
    "FieldSchema",
    "Lexicons",
    "MergedPlan",
    "Message",
    "MetricsReport",
    "Persona",
    "PrincipalDecision",
    "PrincipalFeedback",
    "PrincipalPolicy",
    "ProtocolState",
    "QuestionDraft",
    "SafetyVerdict",
    "SessionStart",
    "SessionState",
    "SuiteSpec",
    "TciLedger",
    "ThresholdOrderingError",
    "Timeout",
    "build_escalation_payload",
    "build_persona",
    "build_policy",
    "build_stcc_question",
    "check_value_in_band",
    "compute_metrics",
    "compute_tci",
    "contains_binding_language",
    "decay_stale",
    "expected_ig",
    "extract_field",
    "fuzz_persona",
    "is_stalled",
    "load_domain_config",
    "merge_channels",
    "moderator_classify",
    "preflight",
    "rank_attributes",
    "resolve_conflicts",
    "rewrite_non_binding",
    "run_scenario",
    "run_suite",
    "scan_trace",
    "serialize_domain_config",
    "validate_neutral_compliance",
]
