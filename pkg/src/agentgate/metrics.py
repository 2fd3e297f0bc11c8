"""Trace-derived metrics: completeness convergence, information-gain
attribution, outcomes, escalations, and violation severities.

Everything here is computed from the audit trace alone, including an
independent violation scanner that re-checks every delivered message against
the lexicons and boundaries rather than trusting the engine's own verdicts.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field as dataclass_field
from typing import Sequence

from .domain import DomainConfig
from .engine import AuditEvent
from .safety import contains_binding_language, scan_currency_values
from .stcc import entropy_bits

SEVERITY_LOW = "low"
SEVERITY_MEDIUM = "medium"
SEVERITY_HIGH = "high"

BOOTSTRAP_RESAMPLES = 1000
BOOTSTRAP_SEED = 20260101


class IncompleteTraceError(ValueError):
    """Trace has no outcome event; metrics would be meaningless."""


@dataclass
class MetricsReport:
    """Per-session metric row; aggregation happens over many of these."""

    session_id: str
    outcome: str
    agreement: bool
    total_rounds: int
    tci_convergence_rounds: int | None
    censored: bool
    tci_final: float
    tci_weighted_final: float
    ig_total_bits: float
    ig_stcc_bits: float
    ig_screen_bits: float
    normalized_utility: float | None
    escalations: dict = dataclass_field(default_factory=dict)
    violations: dict = dataclass_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "outcome": self.outcome,
            "agreement": self.agreement,
            "total_rounds": self.total_rounds,
            "tci_convergence_rounds": self.tci_convergence_rounds,
            "censored": self.censored,
            "tci_final": self.tci_final,
            "tci_weighted_final": self.tci_weighted_final,
            "ig_total_bits": self.ig_total_bits,
            "ig_stcc_bits": self.ig_stcc_bits,
            "ig_screen_bits": self.ig_screen_bits,
            "normalized_utility": self.normalized_utility,
            "escalations": dict(sorted(self.escalations.items())),
            "violations": dict(sorted(self.violations.items())),
        }


@dataclass
class ViolationScan:
    """Independent re-check of a trace's delivered messages.

    ``i3_breaches`` lists deliveries that carried binding language or
    boundary overruns without a preceding principal approval: the literal
    safety-preflight invariant.
    """

    low: int = 0
    medium: int = 0
    high: int = 0
    i3_breaches: list = dataclass_field(default_factory=list)
    gate_breaches: list = dataclass_field(default_factory=list)
    tci_series: list = dataclass_field(default_factory=list)


def scan_trace(trace: Sequence[AuditEvent], config: DomainConfig) -> ViolationScan:
    """Replay a trace, re-deriving safety and gating facts from first
    principles.

    Boundary state follows principal-approved adjustments found in the trace,
    so an approved wider band does not count as a violation afterwards.
    """
    scan = ViolationScan()
    bounds: dict[str, tuple[float, float]] = {
        rule.rule_id: (rule.min_value, rule.max_value)
        for rule in config.numeric_boundaries()
    }
    rules = config.numeric_boundaries()
    last_tci = 0.0
    last_tci_weighted = 0.0
    decision_seqs: set[int] = set()

    for event in trace:
        payload = event.payload
        if event.kind == "principal_decision":
            decision_seqs.add(event.seq)
            effect = payload.get("effect") or {}
            if effect.get("kind") == "adjust_boundary":
                bounds[effect["rule_id"]] = (float(effect["min"]), float(effect["max"]))
        elif event.kind == "escalation":
            trigger = payload["payload"]["trigger"]
            if trigger == "boundary_violation":
                scan.medium += 1
        elif event.kind == "tci_update":
            scan.tci_series.append(payload["tci"])
            last_tci = payload["tci"]
            last_tci_weighted = payload["tci_weighted"]
        elif event.kind == "transition":
            if payload.get("from") == "SCREEN" and payload.get("to") == "NEGOTIATE":
                # Judge the gate from the ledger updates preceding the
                # transition, not from the transition's own record.
                if min(last_tci, last_tci_weighted) < config.tau_gate:
                    scan.gate_breaches.append(
                        {
                            "seq": event.seq,
                            "tci": last_tci,
                            "tci_weighted": last_tci_weighted,
                        }
                    )
        elif event.kind == "safety_event" and payload.get("subkind") == "preflight":
            verdict = payload.get("verdict", {})
            if not payload.get("delivered"):
                if verdict.get("binding_hits"):
                    scan.low += 1
                continue
            text = payload.get("text", "")
            intent = payload.get("intent") or {}
            # Approval counts only when it references a principal_decision
            # event that actually precedes this delivery.
            approved = payload.get("approved_by_seq") in decision_seqs
            hits = contains_binding_language(text, config.lexicons)
            boundary_bad = []
            if intent:
                for rule in rules:
                    raw = intent.get(rule.field_id)
                    if isinstance(raw, dict) and isinstance(raw.get("value"), (int, float)):
                        low, high = bounds[rule.rule_id]
                        value = float(raw["value"])
                        if not low <= value <= high:
                            boundary_bad.append((rule.rule_id, value))
            else:
                for value, unit in scan_currency_values(text):
                    for rule in rules:
                        if rule.unit is not None and rule.unit != unit:
                            continue
                        low, high = bounds[rule.rule_id]
                        if not low <= value <= high:
                            boundary_bad.append((rule.rule_id, value))
            if (hits or boundary_bad) and not approved:
                scan.high += 1
                scan.i3_breaches.append(
                    {
                        "seq": event.seq,
                        "text": text,
                        "binding": [h.phrase for h in hits],
                        "boundary": boundary_bad,
                    }
                )
    return scan


def compute_metrics(trace: Sequence[AuditEvent], config: DomainConfig) -> MetricsReport:
    """Distill one complete trace into its metric row.

    Information gain uses the collapse model: each newly revealed field
    contributes the entropy of its configured prior, attributed to the
    opening-question phase or to screening by the state recorded at reveal
    time. Sessions that never reach tau_complete are censored, not imputed.
    """
    outcome_event = next((e for e in trace if e.kind == "outcome"), None)
    if outcome_event is None:
        raise IncompleteTraceError("trace has no outcome event")

    prior_entropy = {
        schema.field_id: entropy_bits(schema.prior) for schema in config.required_fields
    }

    rounds_seen = 0
    convergence: int | None = None
    ig_stcc = 0.0
    ig_screen = 0.0
    tci_final = 0.0
    tci_weighted_final = 0.0
    escalations: dict[str, int] = {}
    session_id = trace[0].session_id if trace else "<unknown>"

    for event in trace:
        payload = event.payload
        if event.kind == "safety_event" and payload.get("subkind") == "preflight":
            if payload.get("delivered"):
                rounds_seen += 1
        elif event.kind == "tci_update":
            tci_final = payload["tci"]
            tci_weighted_final = payload["tci_weighted"]
            for field_id in payload.get("newly_revealed", []):
                gained = prior_entropy.get(field_id, 0.0)
                if payload.get("state") == "STCC":
                    ig_stcc += gained
                else:
                    ig_screen += gained
            if convergence is None and payload["tci"] >= config.tau_complete:
                convergence = rounds_seen
        elif event.kind == "escalation":
            trigger = payload["payload"]["trigger"]
            escalations[trigger] = escalations.get(trigger, 0) + 1

    scan = scan_trace(trace, config)
    outcome = outcome_event.payload["outcome"]
    terms = outcome_event.payload.get("terms") or {}

    utility: float | None = None
    weight_sum = 0.0
    score_sum = 0.0
    for field_id, term in terms.items():
        try:
            schema = config.schema_for(field_id)
        except KeyError:
            continue
        if schema.utility is None or not isinstance(term.get("value"), (int, float)):
            continue
        score_sum += schema.weight * schema.utility.score(float(term["value"]))
        weight_sum += schema.weight
    if outcome == "AGREE" and weight_sum > 0:
        utility = score_sum / weight_sum

    return MetricsReport(
        session_id=session_id,
        outcome=outcome,
        agreement=outcome == "AGREE",
        total_rounds=outcome_event.payload["round"],
        tci_convergence_rounds=convergence,
        censored=convergence is None,
        tci_final=tci_final,
        tci_weighted_final=tci_weighted_final,
        ig_total_bits=ig_stcc + ig_screen,
        ig_stcc_bits=ig_stcc,
        ig_screen_bits=ig_screen,
        normalized_utility=utility,
        escalations=escalations,
        violations={
            SEVERITY_LOW: scan.low,
            SEVERITY_MEDIUM: scan.medium,
            SEVERITY_HIGH: scan.high,
        },
    )


def bootstrap_ci(
    values: Sequence[float], rng: random.Random, resamples: int = BOOTSTRAP_RESAMPLES
) -> tuple[float, float]:
    """Percentile bootstrap 95% interval over per-session values."""
    if not values:
        return (math.nan, math.nan)
    if len(values) == 1:
        return (values[0], values[0])
    means = []
    n = len(values)
    for _ in range(resamples):
        sample = [values[rng.randrange(n)] for _ in range(n)]
        means.append(sum(sample) / n)
    means.sort()
    lo = means[int(0.025 * resamples)]
    hi = means[min(int(0.975 * resamples), resamples - 1)]
    return (lo, hi)


def _summary(values: Sequence[float], rng: random.Random) -> dict:
    if not values:
        return {"mean": None, "stdev": None, "ci95": [None, None], "n": 0}
    mean = sum(values) / len(values)
    stdev = statistics.stdev(values) if len(values) > 1 else 0.0
    lo, hi = bootstrap_ci(list(values), rng)
    return {"mean": mean, "stdev": stdev, "ci95": [lo, hi], "n": len(values)}


def aggregate_reports(
    reports: Sequence[MetricsReport],
    detection: dict | None = None,
    bootstrap_seed: int = BOOTSTRAP_SEED,
) -> dict:
    """Aggregate per-session rows into means, dispersion, and CIs.

    ``detection`` carries the corpus-level commitment-detection rates, which
    are a property of the lexicon rather than of any single session.
    """
    rng = random.Random(bootstrap_seed)
    sessions = len(reports)
    rounds = [float(r.total_rounds) for r in reports]
    agreements = [1.0 if r.agreement else 0.0 for r in reports]
    ig_total = [r.ig_total_bits for r in reports]
    ig_stcc = [r.ig_stcc_bits for r in reports]
    ig_screen = [r.ig_screen_bits for r in reports]
    utilities = [r.normalized_utility for r in reports if r.normalized_utility is not None]
    convergence = [
        float(r.tci_convergence_rounds)
        for r in reports
        if r.tci_convergence_rounds is not None
    ]
    censored = sum(1 for r in reports if r.censored)

    escalation_counts: dict[str, int] = {}
    for report in reports:
        for trigger, count in report.escalations.items():
            escalation_counts[trigger] = escalation_counts.get(trigger, 0) + count
    violation_sessions: dict[str, int] = {SEVERITY_LOW: 0, SEVERITY_MEDIUM: 0, SEVERITY_HIGH: 0}
    violation_totals: dict[str, int] = {SEVERITY_LOW: 0, SEVERITY_MEDIUM: 0, SEVERITY_HIGH: 0}
    for report in reports:
        for severity in violation_totals:
            count = report.violations.get(severity, 0)
            violation_totals[severity] += count
            if count > 0:
                violation_sessions[severity] += 1

    aggregate = {
        "sessions": sessions,
        "agreement_rate": _summary(agreements, rng),
        "total_rounds": _summary(rounds, rng),
        "tci_convergence_rounds": _summary(convergence, rng),
        "censored_sessions": censored,
        "ig_total_bits": _summary(ig_total, rng),
        "ig_stcc_bits": _summary(ig_stcc, rng),
        "ig_screen_bits": _summary(ig_screen, rng),
        # Artifact convention: utility is a config-declared linear rescaling,
        # not a paper-specified function.
        "normalized_utility": _summary(utilities, rng),
        "escalation_frequency": {
            trigger: count / sessions if sessions else 0.0
            for trigger, count in sorted(escalation_counts.items())
        },
        "violation_rate": {
            severity: violation_sessions[severity] / sessions if sessions else 0.0
            for severity in sorted(violation_sessions)
        },
        "violation_totals": dict(sorted(violation_totals.items())),
    }
    if detection is not None:
        aggregate["commitment_detection"] = detection
    return aggregate
