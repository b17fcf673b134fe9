"""End-to-end knowledge-base construction from a report manifest."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import build_clusters
from .embedding import TextEmbedder, embed_dual
from .extraction import extract_entries, validate_entry
from .ingestion import OcrAdapter, filter_relevance, load_manifest, reconstruct_document
from .providers import LlmProvider
from .store import KnowledgeBase

__all__ = ["BuildStats", "build_knowledge_base"]

logger = logging.getLogger(__name__)


@dataclass
class BuildStats:
    """Counter block summarizing one build run."""

    documents: int = 0
    relevant: int = 0
    extracted: int = 0
    validated: int = 0
    rejected: int = 0
    rejection_reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, object]:
        return {
            "documents": self.documents,
            "relevant": self.relevant,
            "extracted": self.extracted,
            "validated": self.validated,
            "rejected": self.rejected,
            "rejection_reasons": list(self.rejection_reasons),
        }


def build_knowledge_base(
    manifest_path: str | Path,
    provider: LlmProvider,
    embedder: TextEmbedder,
    ocr: OcrAdapter | None = None,
) -> tuple[KnowledgeBase, BuildStats]:
    """Ingest, filter, extract, validate, embed, index, and cluster.

    Only entries that survive grounded validation are embedded and
    stored; everything else is counted and logged, never silently
    dropped.  Clusters are rebuilt from scratch on the final entry set.
    """
    stats = BuildStats()
    kb = KnowledgeBase(embedder.identity)
    documents = load_manifest(Path(manifest_path))
    stats.documents = len(documents)
    for doc in documents:
        doc = reconstruct_document(doc, ocr)
        doc = filter_relevance(doc, provider)
        if doc.relevance != "relevant":
            logger.info("%s: filtered as irrelevant", doc.doc_id)
            continue
        stats.relevant += 1
        record = extract_entries(doc, provider)
        if not record.passed:
            logger.warning("%s: extraction failed after retry", doc.doc_id)
            continue
        stats.extracted += len(record.entries)
        for entry in record.entries:
            validated, reasons = validate_entry(entry, doc, provider)
            if reasons:
                stats.rejected += 1
                stats.rejection_reasons.extend(f"{entry.id}: {r}" for r in reasons)
                logger.info("%s rejected: %s", entry.id, "; ".join(reasons))
                continue
            code_vec, behav_vec = embed_dual(validated.snippet, validated.behavior, embedder)
            kb.upsert_entry(validated.with_embeddings(code_vec, behav_vec))
            stats.validated += 1
    result = build_clusters(kb.entries())
    kb.clusters = result.behavior_clusters
    return kb, stats
