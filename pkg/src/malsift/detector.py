"""Package-level detection: slice, summarize, retrieve, classify, aggregate.

Each sensitive call site yields one backward slice.  The slice's
behavior summary is produced from its category/construct profile, both
texts are embedded, the knowledge base returns the nearest vetted
examples, and the classifier yields one verdict per slice.  A package
is labeled malicious exactly when at least one slice is.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable

from .embedding import FallbackEmbedder, TextEmbedder, embed_dual
from .model import (
    LABELS,
    CodeSlice,
    DetectionReport,
    ScoreTriple,
    SensitiveApiCatalogue,
    SliceVerdict,
)
from .providers import LlmProvider, ProviderError
from .slicer import (
    DEFAULT_MAX_STATEMENTS,
    PackageSource,
    ProgramGraph,
    SensitiveSite,
    backward_slice,
    build_program_graph,
    load_catalogue,
    load_package_source,
    locate_sensitive_calls,
)
from .store import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_K, KnowledgeBase, RetrievalResult

__all__ = [
    "PROMPT_SLICE_LINES",
    "PROMPT_SNIPPET_LINES",
    "slice_sites",
    "slice_categories",
    "slice_constructs",
    "summarize_behavior",
    "classify_slice",
    "aggregate_verdicts",
    "detect_package",
    "render_report",
]

logger = logging.getLogger(__name__)

PROMPT_SLICE_LINES = 200
PROMPT_SNIPPET_LINES = 60

FUNCTION_CONSTRUCTOR = "function_constructor"


def slice_sites(
    graph: ProgramGraph, sites: list[SensitiveSite], sliced: CodeSlice
) -> list[SensitiveSite]:
    """The located sites whose statement belongs to the slice."""
    keys = {(s.file, s.line, s.source) for s in sliced.statements}
    members = []
    for site in sites:
        node = graph.nodes[site.node_id]
        if (node.file, node.line, node.source) in keys:
            members.append(site)
    return members


def slice_categories(sites: list[SensitiveSite]) -> tuple[str, ...]:
    return tuple(sorted({site.category for site in sites}))


def slice_constructs(sites: list[SensitiveSite]) -> tuple[str, ...]:
    if any(site.api_name.split(".")[-1] == "Function" for site in sites):
        return (FUNCTION_CONSTRUCTOR,)
    return ()


def _truncated(text: str, limit: int) -> str:
    lines = text.splitlines()
    if len(lines) <= limit:
        return text
    omitted = len(lines) - limit
    return "\n".join(lines[:limit] + [f"... {omitted} more lines omitted"])


def _slice_header(sliced: CodeSlice, categories: tuple[str, ...], constructs: tuple[str, ...]) -> str:
    file, line, api_name, category = sliced.sensitive_call
    return "\n".join(
        [
            f"package: {sliced.package_id}",
            f"entry: {sliced.entry_point[0]}:{sliced.entry_point[1]}",
            f"sensitive: {api_name} ({category}) at {file}:{line}",
            f"categories: {', '.join(categories) or 'none'}",
            f"constructs: {', '.join(constructs) or 'none'}",
        ]
    )


def summarize_behavior(
    provider: LlmProvider,
    sliced: CodeSlice,
    categories: tuple[str, ...],
    constructs: tuple[str, ...],
) -> str:
    prompt = (
        "[SLICE]\n"
        + _slice_header(sliced, categories, constructs)
        + "\nlines:\n"
        + _truncated(sliced.text(), PROMPT_SLICE_LINES)
        + "\n[END SLICE]\n"
        "Describe what this code does at runtime in plain declarative\n"
        "sentences.  Cover only observable behavior, never identifiers."
    )
    try:
        return provider.complete("summarize", prompt).strip()
    except ProviderError as exc:
        if not exc.retriable:
            raise
        return provider.complete("summarize", prompt).strip()


def _classify_prompt(
    sliced: CodeSlice,
    retrieval: RetrievalResult,
    kb: KnowledgeBase,
    categories: tuple[str, ...],
    constructs: tuple[str, ...],
) -> str:
    parts = [
        "[TARGET SLICE]",
        _slice_header(sliced, categories, constructs),
        "lines:",
        _truncated(sliced.text(), PROMPT_SLICE_LINES),
        "[END TARGET SLICE]",
        "",
        "[TARGET BEHAVIOR]",
        sliced.behavior_summary or "(no summary)",
        "[END TARGET BEHAVIOR]",
        "",
        "[RETRIEVED EXAMPLES]",
    ]
    reasoning_lines = []
    for score in retrieval.matches:
        entry = kb.get(score.entry_id)
        parts.append(
            f"### entry {score.entry_id} sim_code={score.sim_code:.6f} "
            f"sim_behav={score.sim_behav:.6f} sim_total={score.sim_total:.6f}"
        )
        parts.append(_truncated(entry.snippet, PROMPT_SNIPPET_LINES))
        parts.append(f"behavior: {entry.behavior}")
        reasoning_lines.append(f"- {score.entry_id}: {entry.reasoning.why_suspicious}")
    parts.append("[END RETRIEVED EXAMPLES]")
    parts.append("")
    parts.append("[EXPERT REASONING]")
    parts.extend(reasoning_lines or ["(none)"])
    parts.append("[END EXPERT REASONING]")
    parts.append("")
    parts.append(
        "Decide whether the target slice is malicious given the retrieved\n"
        "examples and reasoning.  Respond with a single JSON object:\n"
        '{"label": "malicious" or "benign", "explanation": "...",\n'
        ' "matched_entry_ids": ["..."]}'
    )
    return "\n".join(parts)


def _parse_verdict(raw: str, scores: tuple[ScoreTriple, ...]) -> SliceVerdict:
    data = json.loads(raw)
    if not isinstance(data, dict):
        raise ValueError("classify response must be a JSON object")
    label = data.get("label")
    if label not in LABELS:
        raise ValueError(f"classify label must be one of {sorted(LABELS)}, got {label!r}")
    explanation = data.get("explanation")
    if not isinstance(explanation, str) or not explanation:
        raise ValueError("classify explanation must be a non-empty string")
    matched = data.get("matched_entry_ids")
    if not isinstance(matched, list) or not all(isinstance(m, str) for m in matched):
        raise ValueError("classify matched_entry_ids must be a list of strings")
    return SliceVerdict(
        label=label,
        explanation=explanation,
        matched_entry_ids=tuple(matched),
        scores=scores,
    )


def classify_slice(
    provider: LlmProvider,
    sliced: CodeSlice,
    retrieval: RetrievalResult,
    kb: KnowledgeBase,
    categories: tuple[str, ...],
    constructs: tuple[str, ...] = (),
) -> SliceVerdict:
    """One verdict for one slice; a failed classification is benign.

    The provider gets one retry; if both attempts fail the slice is
    conservatively labeled benign with the error recorded, so a single
    bad response cannot flip a whole package to malicious.
    """
    prompt = _classify_prompt(sliced, retrieval, kb, categories, constructs)
    scores = retrieval.matches
    last_error: Exception | None = None
    for _ in range(2):
        try:
            return _parse_verdict(provider.complete("classify", prompt), scores)
        except (ProviderError, ValueError, json.JSONDecodeError) as exc:
            last_error = exc
    logger.warning("classification failed twice: %s", last_error)
    return SliceVerdict(
        label="benign",
        explanation=f"classification error: {last_error}",
        matched_entry_ids=(),
        scores=scores,
    )


def aggregate_verdicts(verdicts: tuple[SliceVerdict, ...]) -> tuple[str, tuple[int, ...]]:
    """Package label plus the indexes of the slices responsible for it.

    Existential rule: one malicious slice makes the package malicious;
    a package with no slices (or only benign ones) is benign.
    """
    responsible = tuple(i for i, v in enumerate(verdicts) if v.label == "malicious")
    return ("malicious" if responsible else "benign"), responsible


def detect_package(
    package: str | Path | PackageSource,
    kb: KnowledgeBase,
    provider: LlmProvider,
    embedder: TextEmbedder | None = None,
    *,
    k: int = DEFAULT_K,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    max_statements: int = DEFAULT_MAX_STATEMENTS,
    catalogue: SensitiveApiCatalogue | None = None,
    clock: Callable[[], float] | None = None,
) -> DetectionReport:
    """Run the full per-package pipeline and aggregate slice verdicts."""
    now = clock or time.perf_counter
    if embedder is None:
        embedder = FallbackEmbedder(dim=kb.dim_code)
    if catalogue is None:
        catalogue = load_catalogue()
    source = package if isinstance(package, PackageSource) else load_package_source(package)

    t_start = now()
    graph = build_program_graph(source)
    sites = locate_sensitive_calls(graph, catalogue)
    slices = [
        backward_slice(graph, site, mode="both", max_statements=max_statements)
        for site in sites
    ]
    t_sliced = now()

    profiles: list[tuple[CodeSlice, tuple[str, ...], tuple[str, ...]]] = []
    for sliced in slices:
        present = slice_sites(graph, sites, sliced)
        categories = slice_categories(present)
        constructs = slice_constructs(present)
        summary = summarize_behavior(provider, sliced, categories, constructs)
        code_vec, behav_vec = embed_dual(sliced.text(), summary, embedder)
        sliced = replace(
            sliced,
            behavior_summary=summary,
            code_embedding=code_vec,
            behavior_embedding=behav_vec,
        )
        profiles.append((sliced, categories, constructs))
    t_summarized = now()

    retrievals = [
        kb.query_topk(s.code_embedding, s.behavior_embedding, k=k, alpha=alpha, beta=beta)
        for s, _, _ in profiles
    ]
    t_retrieved = now()

    verdicts = tuple(
        classify_slice(provider, sliced, retrieval, kb, categories, constructs)
        for (sliced, categories, constructs), retrieval in zip(profiles, retrievals)
    )
    label, responsible = aggregate_verdicts(verdicts)
    t_done = now()

    return DetectionReport(
        package_id=source.package_id,
        package_label=label,
        slice_verdicts=verdicts,
        responsible_slices=responsible,
        kb_version=kb.kb_version,
        timings={
            "slicing": t_sliced - t_start,
            "summarize": t_summarized - t_sliced,
            "retrieval": t_retrieved - t_summarized,
            "classify": t_done - t_retrieved,
            "total": t_done - t_start,
        },
    )


def render_report(report: DetectionReport) -> str:
    """Human-readable multi-line rendering of a detection report."""
    lines = [
        f"package: {report.package_id}",
        f"label: {report.package_label}",
        f"kb_version: {report.kb_version or '(unversioned)'}",
        f"slices: {len(report.slice_verdicts)}",
    ]
    if not report.slice_verdicts:
        lines.append("no sensitive behavior located; nothing to classify")
    if report.responsible_slices:
        lines.append("responsible: " + ", ".join(str(i) for i in report.responsible_slices))
    for i, verdict in enumerate(report.slice_verdicts):
        lines.append(f"[{i}] {verdict.label}: {verdict.explanation}")
        for score in verdict.scores:
            lines.append(
                f"    {score.entry_id} sim_code={score.sim_code:.6f} "
                f"sim_behav={score.sim_behav:.6f} sim_total={score.sim_total:.6f}"
            )
    if report.timings:
        rendered = " ".join(f"{k}={v:.3f}s" for k, v in sorted(report.timings.items()))
        lines.append(f"timings: {rendered}")
    return "\n".join(lines)
