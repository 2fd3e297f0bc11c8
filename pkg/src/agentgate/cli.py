"""Command-line interface: run one scenario, run a suite, render reports,
and serve the principal gateway."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .engine import AuditLog
from .personas import build_persona
from .resources import load_config_ref
from .simulate import build_policy, run_scenario
from .suite import SuiteSpec, render_report, run_suite


def _parse_seeds(spec: str) -> list[int]:
    """Accept "0..9" ranges or comma lists like "1,5,7"."""
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in spec.split(",") if part.strip()]


@click.group()
def main() -> None:
    """Governance engine for delegated screening-and-negotiation dialogues."""


@main.command()
@click.option("--config", "config_ref", required=True, help="Fixture name or config path.")
@click.option("--persona", "persona_id", required=True, help="Persona id.")
@click.option("--policy", "policy_id", default="responsive", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Directory for the audit trace (JSONL).")
@click.option("--no-stcc", is_flag=True, help="Disable the banded opening question.")
@click.option("--no-preflight", is_flag=True, help="Disable outgoing safety preflight.")
def run(config_ref, persona_id, policy_id, seed, out_dir, no_stcc, no_preflight):
    """Run one scenario to a terminal state and print its metrics."""
    config = load_config_ref(config_ref)
    persona = build_persona(persona_id, config)
    policy = build_policy(policy_id)
    audit_log = AuditLog(directory=out_dir) if out_dir else None
    result = run_scenario(
        config,
        persona,
        policy,
        seed,
        audit_log=audit_log,
        stcc_enabled=not no_stcc,
        preflight_enabled=not no_preflight,
    )
    click.echo(f"outcome: {result.session.state.value} in {result.session.round} rounds")
    click.echo(json.dumps(result.metrics.to_dict(), indent=2, sort_keys=True))
    if out_dir:
        click.echo(f"trace written to {out_dir}/{result.session.session_id}.jsonl")


@main.command()
@click.option("--suite", "suite_path", required=True, type=click.Path(path_type=Path))
@click.option("--seeds", required=True, help='Seed range "0..9" or list "1,2,3".')
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def suite(suite_path, seeds, out_dir):
    """Run a suite file (baselines, ablations, sweeps) and write reports."""
    spec = SuiteSpec.from_file(suite_path)
    report = run_suite(spec, _parse_seeds(seeds), out_dir=out_dir)
    click.echo(render_report(report, "table"))
    click.echo(f"reports written to {out_dir}")


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(path_type=Path))
@click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table",
              show_default=True)
def report(in_dir, fmt):
    """Render a previously written suite report."""
    report_path = Path(in_dir) / "report.json"
    if not report_path.exists():
        raise click.ClickException(f"no report.json under {in_dir}")
    data = json.loads(report_path.read_text())
    click.echo(render_report(data, fmt), nl=False)


@main.command()
@click.option("--config", "config_ref", default="staffing", show_default=True)
@click.option("--persona", "persona_id", default="staffing_walkthrough", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(config_ref, persona_id, seed, host, port):
    """Serve the principal gateway with one scripted session.

    The session runs until a human decision is needed, then waits for the
    console (or curl) to post one.
    """
    import uvicorn

    from .gateway import serve_scenario

    config = load_config_ref(config_ref)
    persona = build_persona(persona_id, config)
    _, app = serve_scenario(config, persona, seed=seed)
    click.echo(f"serving session on http://{host}:{port} (Ctrl-C to stop)")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
