"""Shared fixtures: entry factory, providers, and the report-built KB."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from malsift.embedding import FallbackEmbedder, fallback_embed
from malsift.model import ExecutionContext, KnowledgeEntry, ReasoningChain
from malsift.pipeline import build_knowledge_base
from malsift.providers import MockProvider

FIXTURES = Path(__file__).parent / "fixtures"

DIM = 256


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture()
def provider() -> MockProvider:
    return MockProvider()


@pytest.fixture(scope="session")
def embedder() -> FallbackEmbedder:
    return FallbackEmbedder(dim=DIM)


def build_entry(
    eid: str = "report-x:000000000000",
    *,
    snippet: str = "import os\nos.system(cmd)",
    language: str = "python",
    trigger: str = "install",
    file_location: str = "setup.py",
    permissions: str = "user",
    behavior: str = "It executes commands or dynamically supplied code.",
    why: str = "it runs shell commands during automated install phases",
    violations: tuple[tuple[str, str], ...] = (
        ("execution_context", "a build step should not spawn shells"),
    ),
    boundary: str = "legitimate setup scripts only compile and copy files",
    strategy: str = "functional_violation",
    indicators: tuple[str, ...] = (),
    code_embedding: np.ndarray | None = None,
    behavior_embedding: np.ndarray | None = None,
    source_report: str = "report-x",
    audit: str = "auto_validated",
    dim: int = DIM,
) -> KnowledgeEntry:
    """A schema-valid entry; embeddings default to the fallback embedder."""
    if code_embedding is None:
        code_embedding = fallback_embed(snippet, dim)
    if behavior_embedding is None:
        behavior_embedding = fallback_embed(behavior, dim)
    return KnowledgeEntry(
        id=eid,
        snippet=snippet,
        language=language,
        context=ExecutionContext(
            trigger=trigger, file_location=file_location, permissions=permissions
        ),
        behavior=behavior,
        reasoning=ReasoningChain(
            why_suspicious=why,
            violated_expectations=violations,
            boundary_distinction=boundary,
            strategy=strategy,
        ),
        indicators=indicators,
        code_embedding=code_embedding,
        behavior_embedding=behavior_embedding,
        source_report=source_report,
        audit=audit,
    )


@pytest.fixture()
def make_entry():
    return build_entry


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """n random unit-norm float32 rows."""
    rows = rng.standard_normal((n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


@pytest.fixture(scope="session")
def reports_kb(embedder):
    """KB built once from the bundled report corpus with the mock provider."""
    kb, stats = build_knowledge_base(
        FIXTURES / "reports" / "kb_set" / "manifest.json", MockProvider(), embedder
    )
    assert stats.validated == 11, stats.to_dict()
    return kb
