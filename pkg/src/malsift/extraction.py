"""Knowledge extraction: turn a relevant report into validated entries.

``extract_entries`` prompts the provider for structured entries and
parses them into unvalidated candidates; ``validate_entry`` then grounds
each candidate against the source document (snippet containment,
indicator containment, provider cross-check) and promotes survivors to
auto_validated.  Expert validation is never computed here; it arrives
only through the audit CLI.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

from .ingestion import ReportDocument
from .model import KnowledgeEntry, SchemaError, validate_entry_schema
from .providers import LlmProvider, ProviderError

__all__ = ["ExtractionRecord", "extract_entries", "validate_entry", "ws_normalize"]

logger = logging.getLogger(__name__)

_EXTRACTION_INSTRUCTIONS = """\
Extract every malicious code example from the report below. Answer with
JSON only: {"entries": [...]} where each entry has snippet, language
(python|javascript|other), context {trigger, file_location, permissions},
behavior, reasoning {why_suspicious, violated_expectations
[{violation_type, statement}], boundary_distinction, strategy}, and
indicators (array of strings). Copy snippets verbatim from the report.
"""


def ws_normalize(text: str) -> str:
    """Collapse all whitespace runs to single spaces for containment checks."""
    return " ".join(text.split())


@dataclass(frozen=True)
class ExtractionRecord:
    """Outcome of one extraction call.

    ``passed`` is False only when the provider response never parsed;
    the raw response is preserved in that case for debugging.  Dropped
    candidates are recorded as (position, reason) pairs.
    """

    doc_id: str
    passed: bool
    entries: tuple[KnowledgeEntry, ...]
    dropped: tuple[tuple[int, str], ...]
    raw_response: str
    attempts: int


def _entry_id(doc_id: str, snippet: str) -> str:
    digest = hashlib.sha256(ws_normalize(snippet).encode("utf-8")).hexdigest()[:12]
    return f"{doc_id}:{digest}"


def _parse_candidates(
    doc: ReportDocument, raw: str
) -> tuple[list[KnowledgeEntry], list[tuple[int, str]]]:
    data = json.loads(raw)
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise SchemaError('extraction response must be {"entries": [...]}')
    entries: list[KnowledgeEntry] = []
    dropped: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    for position, item in enumerate(data["entries"]):
        if not isinstance(item, dict):
            dropped.append((position, "entry is not an object"))
            continue
        payload = dict(item)
        payload.setdefault("indicators", [])
        payload["id"] = _entry_id(doc.doc_id, str(payload.get("snippet", "")))
        payload["source_report"] = doc.doc_id
        payload["audit"] = "unvalidated"
        payload.setdefault("code_embedding", None)
        payload.setdefault("behavior_embedding", None)
        try:
            entry = KnowledgeEntry.from_dict(payload)
        except SchemaError as exc:
            dropped.append((position, str(exc)))
            continue
        if not entry.snippet.strip():
            dropped.append((position, "empty snippet"))
            continue
        if not entry.reasoning.why_suspicious.strip() or not entry.reasoning.violated_expectations:
            dropped.append((position, "empty reasoning"))
            continue
        if entry.id in seen_ids:
            dropped.append((position, f"duplicate snippet for id {entry.id}"))
            continue
        seen_ids.add(entry.id)
        entries.append(entry)
    return entries, dropped


def extract_entries(doc: ReportDocument, provider: LlmProvider) -> ExtractionRecord:
    """Extract unvalidated candidate entries from a relevant document.

    The provider gets one retry when its response fails to parse; a
    second failure yields a failed record with the raw response kept.
    """
    if doc.relevance != "relevant":
        raise ValueError(f"doc {doc.doc_id}: extraction requires relevance=relevant")
    prompt = (
        _EXTRACTION_INSTRUCTIONS
        + f"[DOCUMENT doc_id={doc.doc_id}]\n{doc.reconstructed_text}\n[END DOCUMENT]"
    )
    raw = ""
    for attempt in (1, 2):
        raw = provider.complete("extraction", prompt)
        try:
            entries, dropped = _parse_candidates(doc, raw)
        except (json.JSONDecodeError, SchemaError) as exc:
            logger.warning("doc %s: extraction parse failure (attempt %d): %s", doc.doc_id, attempt, exc)
            continue
        for position, reason in dropped:
            logger.info("doc %s: dropped candidate %d: %s", doc.doc_id, position, reason)
        return ExtractionRecord(
            doc_id=doc.doc_id,
            passed=True,
            entries=tuple(entries),
            dropped=tuple(dropped),
            raw_response=raw,
            attempts=attempt,
        )
    return ExtractionRecord(
        doc_id=doc.doc_id,
        passed=False,
        entries=(),
        dropped=(),
        raw_response=raw,
        attempts=2,
    )


def validate_entry(
    entry: KnowledgeEntry, doc: ReportDocument, provider: LlmProvider
) -> tuple[KnowledgeEntry, list[str]]:
    """Ground a candidate against its source document.

    Three checks: the snippet must appear in the reconstructed text
    (whitespace-normalized), every indicator must appear verbatim, and
    the provider must affirm that the behavior matches the snippet.
    Returns the entry promoted to auto_validated when all pass,
    otherwise the unchanged entry plus one reason per failed check.
    """
    if entry.source_report != doc.doc_id:
        raise ValueError(f"entry {entry.id} does not belong to doc {doc.doc_id}")
    reasons = validate_entry_schema(entry, require_embeddings=False)
    if ws_normalize(entry.snippet) not in ws_normalize(doc.reconstructed_text):
        reasons.append("snippet: not grounded in the source document")
    for indicator in entry.indicators:
        if indicator not in doc.reconstructed_text:
            reasons.append(f"indicator: {indicator!r} not grounded in the source document")
    check_prompt = (
        "Does the behavior description match what the snippet does? "
        "Answer yes or no.\n"
        f"[SNIPPET]\n{entry.snippet}\n[END SNIPPET]\n"
        f"[BEHAVIOR]\n{entry.behavior}\n[END BEHAVIOR]"
    )
    try:
        answer = provider.complete("extraction_check", check_prompt)
        if not answer.strip().lower().startswith("yes"):
            reasons.append("behavior: provider cross-check did not affirm")
    except ProviderError as exc:
        reasons.append(f"behavior: cross-check unavailable ({exc})")
    if reasons:
        for reason in reasons:
            logger.info("entry %s: validation failed: %s", entry.id, reason)
        return entry, reasons
    return entry.with_audit("auto_validated"), []
