"""Access to packaged fixture files (domain configs, phrase corpus)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .domain import DomainConfig, load_domain_config

BUILTIN_CONFIGS = ("staffing", "contractor", "procurement")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("agentgate").joinpath("fixtures", name)))


def load_config_ref(ref: str) -> DomainConfig:
    """Resolve a config reference: a builtin fixture name or a file path."""
    if ref in BUILTIN_CONFIGS:
        return load_domain_config(fixture_path(f"{ref}.json"))
    return load_domain_config(Path(ref))


def commitment_corpus_path() -> Path:
    return fixture_path("commitment_corpus.tsv")
