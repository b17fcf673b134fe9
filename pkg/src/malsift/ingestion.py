"""Threat-report ingestion: manifests, block reconstruction, relevance.

A report document arrives as an ordered list of typed blocks (prose,
code, image).  Reconstruction renders them back into one text with code
wrapped in triple-backtick fences, which is what the extraction prompts
and the grounding checks operate on.  Image blocks are converted to
prose through an OCR adapter when one is supplied.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol

from .model import SchemaError
from .providers import LlmProvider, ProviderError

__all__ = [
    "Block",
    "FixtureOcr",
    "OcrAdapter",
    "RELEVANCE_STATES",
    "ReportDocument",
    "filter_relevance",
    "load_document",
    "load_manifest",
    "reconstruct_document",
]

logger = logging.getLogger(__name__)

BLOCK_KINDS = frozenset({"prose", "code", "image"})
RELEVANCE_STATES = frozenset({"unfiltered", "relevant", "irrelevant"})

# Image text below this OCR confidence is dropped from reconstruction.
MIN_OCR_CONFIDENCE = 0.5


@dataclass(frozen=True)
class Block:
    kind: str
    position: int
    content: str

    @classmethod
    def from_dict(cls, data: dict) -> "Block":
        kind = data.get("kind")
        if kind not in BLOCK_KINDS:
            raise SchemaError(f"block.kind: {kind!r} not in {sorted(BLOCK_KINDS)}")
        position = data.get("position")
        if not isinstance(position, int):
            raise SchemaError("block.position: expected an integer")
        content = data.get("content")
        if not isinstance(content, str):
            raise SchemaError("block.content: expected a string")
        return cls(kind=kind, position=position, content=content)


@dataclass(frozen=True)
class ReportDocument:
    """One threat report: identity, ordered blocks, relevance state."""

    doc_id: str
    source_url: str
    blocks: tuple[Block, ...]
    reconstructed_text: str = ""
    relevance: str = "unfiltered"


class OcrAdapter(Protocol):
    """image bytes -> (recognized text, confidence in [0, 1])."""

    def recognize(self, image: bytes) -> tuple[str, float]: ...


class FixtureOcr:
    """Replay OCR results keyed by sha256 of the image bytes."""

    def __init__(self, results: dict[str, tuple[str, float]]) -> None:
        self._results = dict(results)

    def recognize(self, image: bytes) -> tuple[str, float]:
        digest = hashlib.sha256(image).hexdigest()
        if digest not in self._results:
            return "", 0.0
        return self._results[digest]


def reconstruct_document(doc: ReportDocument, ocr: OcrAdapter | None = None) -> ReportDocument:
    """Render blocks, in position order, into one analysis text.

    Prose passes through verbatim; code is wrapped in ``` fences with no
    language tag; image blocks become prose via OCR when an adapter is
    given and the confidence clears MIN_OCR_CONFIDENCE, otherwise they
    are dropped with a log entry.
    """
    segments: list[str] = []
    for block in sorted(doc.blocks, key=lambda b: b.position):
        if block.kind == "prose":
            segments.append(block.content)
        elif block.kind == "code":
            segments.append(f"```\n{block.content}\n```")
        else:
            if ocr is None:
                logger.info("doc %s: skipping image block at %d (no OCR)", doc.doc_id, block.position)
                continue
            try:
                image = base64.b64decode(block.content, validate=True)
            except (binascii.Error, ValueError):
                logger.warning("doc %s: image block at %d is not base64", doc.doc_id, block.position)
                continue
            text, confidence = ocr.recognize(image)
            if text and confidence >= MIN_OCR_CONFIDENCE:
                segments.append(text)
            else:
                logger.info(
                    "doc %s: dropping image block at %d (confidence %.2f)",
                    doc.doc_id,
                    block.position,
                    confidence,
                )
    return replace(doc, reconstructed_text="\n".join(segments))


def filter_relevance(doc: ReportDocument, provider: LlmProvider) -> ReportDocument:
    """Ask the provider whether the document describes package malware.

    The document must be reconstructed first.  Provider failures and
    unparseable answers raise ProviderError (retriable); the document
    stays unfiltered in that case.
    """
    if not doc.reconstructed_text:
        raise ValueError(f"doc {doc.doc_id}: reconstruct before filtering")
    prompt = (
        "Decide whether this write-up analyzes malicious behavior in an "
        "open-source package. Answer with exactly one word, relevant or "
        "irrelevant.\n[DOCUMENT]\n" + doc.reconstructed_text + "\n[END DOCUMENT]"
    )
    raw = provider.complete("relevance", prompt)
    answer = raw.strip().lower()
    if answer.startswith("relevant"):
        verdict = "relevant"
    elif answer.startswith("irrelevant"):
        verdict = "irrelevant"
    else:
        raise ProviderError(f"unparseable relevance answer: {raw!r}", retriable=True)
    logger.info("doc %s: relevance=%s (raw=%r)", doc.doc_id, verdict, raw.strip())
    return replace(doc, relevance=verdict)


def load_document(path: Path, doc_id: str, source_url: str) -> ReportDocument:
    """Load one document file: a JSON array of typed blocks."""
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: expected a JSON array of blocks")
    blocks = tuple(Block.from_dict(b) for b in raw)
    positions = [b.position for b in blocks]
    if len(set(positions)) != len(positions):
        raise SchemaError(f"{path}: duplicate block positions")
    return ReportDocument(doc_id=doc_id, source_url=source_url, blocks=blocks)


def load_manifest(path: Path) -> list[ReportDocument]:
    """Load a report manifest: JSON array of {doc_id, source_url, path}.

    Document paths resolve relative to the manifest's directory.
    Duplicate doc ids are rejected.
    """
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: expected a JSON array")
    docs: list[ReportDocument] = []
    seen: set[str] = set()
    for item in raw:
        if not isinstance(item, dict):
            raise SchemaError(f"{path}: manifest rows must be objects")
        doc_id = item.get("doc_id")
        if not isinstance(doc_id, str) or not doc_id:
            raise SchemaError(f"{path}: doc_id must be a non-empty string")
        if doc_id in seen:
            raise SchemaError(f"{path}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        source_url = item.get("source_url", "")
        doc_path = (path.parent / item["path"]).resolve()
        docs.append(load_document(doc_path, doc_id, str(source_url)))
    return docs
