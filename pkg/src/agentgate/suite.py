"""Suite execution: baselines, ablations, and threshold sweeps over scenario
batches, with aggregate tables and confidence intervals.

Arms:

* ``base``              - full protocol
* ``no_stcc``           - free-form opening instead of the banded question
* ``gate_sweep``        - tau_gate in {0.6, 0.7, 0.8} (one sub-arm each)
* ``safety_ablation``   - outgoing preflight disabled

Identical (suite, seeds) inputs produce byte-identical traces and reports.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

from .domain import DomainConfig
from .metrics import aggregate_reports
from .personas import build_persona
from .resources import commitment_corpus_path, load_config_ref
from .safety import detection_metrics
from .simulate import build_policy, run_scenario

DEFAULT_GATE_SWEEP = (0.6, 0.7, 0.8)
KNOWN_ARMS = ("base", "no_stcc", "gate_sweep", "safety_ablation")


@dataclass(frozen=True)
class SuiteSpec:
    config_ref: str
    personas: tuple[str, ...]
    policy: str = "responsive"
    arms: tuple[str, ...] = ("base",)
    gate_sweep: tuple[float, ...] = DEFAULT_GATE_SWEEP

    @classmethod
    def from_file(cls, path: Path | str) -> "SuiteSpec":
        raw = json.loads(Path(path).read_text())
        return cls(
            config_ref=raw["config"],
            personas=tuple(raw["personas"]),
            policy=raw.get("policy", "responsive"),
            arms=tuple(raw.get("arms", ["base"])),
            gate_sweep=tuple(raw.get("gate_sweep", DEFAULT_GATE_SWEEP)),
        )


@dataclass
class ArmResult:
    arm_id: str
    engine_overrides: dict
    reports: list = dataclass_field(default_factory=list)
    traces: dict = dataclass_field(default_factory=dict)
    aggregate: dict = dataclass_field(default_factory=dict)


def _expand_arms(spec: SuiteSpec) -> list[tuple[str, dict, float | None]]:
    expanded: list[tuple[str, dict, float | None]] = []
    for arm in spec.arms:
        if arm == "base":
            expanded.append(("base", {}, None))
        elif arm == "no_stcc":
            expanded.append(("no_stcc", {"stcc_enabled": False}, None))
        elif arm == "safety_ablation":
            expanded.append(("safety_ablation", {"preflight_enabled": False}, None))
        elif arm == "gate_sweep":
            for tau in spec.gate_sweep:
                expanded.append((f"gate_{tau}", {}, tau))
        else:
            raise ValueError(f"unknown suite arm {arm!r}; known: {KNOWN_ARMS}")
    return expanded


def _arm_config(config: DomainConfig, tau_gate: float | None) -> DomainConfig:
    if tau_gate is None:
        return config
    return dataclasses.replace(config, tau_gate=tau_gate)


def run_suite(
    spec: SuiteSpec, seeds: list[int], out_dir: Path | str | None = None
) -> dict:
    """Run every (arm, persona, seed) combination and aggregate per arm."""
    base_config = load_config_ref(spec.config_ref)
    policy = build_policy(spec.policy)
    detection = detection_metrics(
        commitment_corpus_path(), base_config.lexicons
    ).to_dict()

    arms: list[ArmResult] = []
    for arm_id, overrides, tau in _expand_arms(spec):
        config = _arm_config(base_config, tau)
        result = ArmResult(arm_id=arm_id, engine_overrides=dict(overrides))
        for persona_id in spec.personas:
            persona = build_persona(persona_id, config)
            for seed in seeds:
                sid = f"{arm_id}-{persona_id}-{seed}"
                scenario = run_scenario(
                    config, persona, policy, seed, session_id=sid, **overrides
                )
                result.reports.append(scenario.metrics)
                result.traces[sid] = scenario.trace
        result.aggregate = aggregate_reports(result.reports, detection=detection)
        arms.append(result)

    report = {
        "suite": {
            "config": spec.config_ref,
            "personas": list(spec.personas),
            "policy": spec.policy,
            "arms": list(spec.arms),
            "gate_sweep": list(spec.gate_sweep),
            "seeds": list(seeds),
        },
        "arms": {
            arm.arm_id: {
                "aggregate": arm.aggregate,
                "sessions": [r.to_dict() for r in arm.reports],
            }
            for arm in arms
        },
    }
    if out_dir is not None:
        _write_outputs(Path(out_dir), arms, report)
    return report


def _write_outputs(out_dir: Path, arms: list[ArmResult], report: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for arm in arms:
        arm_dir = out_dir / arm.arm_id / "traces"
        arm_dir.mkdir(parents=True, exist_ok=True)
        for sid, trace in arm.traces.items():
            path = arm_dir / f"{sid}.jsonl"
            path.write_text(
                "".join(event.to_json_line() + "\n" for event in trace),
                encoding="utf-8",
            )
        metrics_path = out_dir / arm.arm_id / "metrics.json"
        metrics_path.write_text(
            json.dumps(report["arms"][arm.arm_id], indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "report.csv").write_text(render_report(report, "csv"), encoding="utf-8")


_CSV_COLUMNS = (
    "arm",
    "sessions",
    "agreement_rate",
    "mean_rounds",
    "rounds_ci_low",
    "rounds_ci_high",
    "convergence_rounds",
    "censored",
    "ig_total_bits",
    "ig_stcc_bits",
    "ig_screen_bits",
    "normalized_utility",
    "escalations_per_session",
    "violations_low",
    "violations_medium",
    "violations_high",
    "detection_fp_rate",
    "detection_fn_rate",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _report_rows(report: dict) -> list[dict]:
    rows = []
    for arm_id in report["arms"]:
        agg = report["arms"][arm_id]["aggregate"]
        detection = agg.get("commitment_detection", {})
        rows.append(
            {
                "arm": arm_id,
                "sessions": agg["sessions"],
                "agreement_rate": agg["agreement_rate"]["mean"],
                "mean_rounds": agg["total_rounds"]["mean"],
                "rounds_ci_low": agg["total_rounds"]["ci95"][0],
                "rounds_ci_high": agg["total_rounds"]["ci95"][1],
                "convergence_rounds": agg["tci_convergence_rounds"]["mean"],
                "censored": agg["censored_sessions"],
                "ig_total_bits": agg["ig_total_bits"]["mean"],
                "ig_stcc_bits": agg["ig_stcc_bits"]["mean"],
                "ig_screen_bits": agg["ig_screen_bits"]["mean"],
                "normalized_utility": agg["normalized_utility"]["mean"],
                "escalations_per_session": sum(agg["escalation_frequency"].values()),
                "violations_low": agg["violation_rate"]["low"],
                "violations_medium": agg["violation_rate"]["medium"],
                "violations_high": agg["violation_rate"]["high"],
                "detection_fp_rate": detection.get("false_pos_rate"),
                "detection_fn_rate": detection.get("false_neg_rate"),
            }
        )
    return rows


def render_report(report: dict, fmt: str) -> str:
    """Render the aggregate report as a delimited table or aligned text."""
    rows = _report_rows(report)
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _fmt(row[key]) for key in _CSV_COLUMNS})
        return buffer.getvalue()
    if fmt == "table":
        headers = list(_CSV_COLUMNS)
        table = [[_fmt(row[key]) for key in headers] for row in rows]
        widths = [
            max(len(headers[i]), *(len(line[i]) for line in table)) if table else len(headers[i])
            for i in range(len(headers))
        ]
        lines = [
            "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
            "  ".join("-" * widths[i] for i in range(len(headers))),
        ]
        for line in table:
            lines.append("  ".join(line[i].ljust(widths[i]) for i in range(len(headers))))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
