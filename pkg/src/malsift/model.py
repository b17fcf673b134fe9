"""Core domain types for the knowledge base and detection pipeline.

Every type is an immutable value object with a canonical JSON form:
``to_dict`` emits plain dicts with stable field names, ``from_dict``
parses and validates them, and ``canonical_json`` renders bytes that
are identical across platforms for identical values.  Embedding vectors
are float32 and serialize as JSON arrays of numbers; round-trips are
bit-exact at that width.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "AUDIT_STATUSES",
    "BehaviorCluster",
    "CATEGORIES",
    "CatalogueEntry",
    "CodeSlice",
    "DetectionReport",
    "ExecutionContext",
    "KnowledgeEntry",
    "LABELS",
    "LANGUAGES",
    "ReasoningChain",
    "SchemaError",
    "SensitiveApiCatalogue",
    "SliceStatement",
    "SliceVerdict",
    "STRATEGIES",
    "TRIGGERS",
    "VIOLATION_TYPES",
    "canonical_json",
    "validate_entry_schema",
]

# Closed vocabularies.  Parsing rejects anything outside these sets.
TRIGGERS = frozenset({"install", "import", "runtime", "unknown"})
VIOLATION_TYPES = frozenset(
    {"execution_context", "functional_boundary", "permission_abuse", "data_flow", "isolation"}
)
STRATEGIES = frozenset(
    {"functional_violation", "contextual_boundary", "privilege_abuse", "temporal_anomaly"}
)
AUDIT_STATUSES = frozenset({"unvalidated", "auto_validated", "expert_validated"})
LANGUAGES = frozenset({"python", "javascript", "other"})
LABELS = frozenset({"malicious", "benign"})
CATEGORIES = frozenset({"network", "encryption", "process", "file", "system_info"})

# Norm tolerance for stored embeddings.
UNIT_NORM_TOL = 1e-6


class SchemaError(ValueError):
    """Raised when a serialized object fails structural or vocabulary checks."""


def canonical_json(obj: Any) -> bytes:
    """Render a JSON-serializable object to canonical UTF-8 bytes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def _vector_to_list(vec: np.ndarray | None) -> list[float] | None:
    if vec is None:
        return None
    return [float(x) for x in np.asarray(vec, dtype=np.float32)]


def _vector_from_list(values: Any, field_name: str) -> np.ndarray | None:
    if values is None:
        return None
    if not isinstance(values, (list, tuple)):
        raise SchemaError(f"{field_name}: expected an array of numbers")
    try:
        arr = np.asarray([float(v) for v in values], dtype=np.float32)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{field_name}: non-numeric element ({exc})") from exc
    arr.flags.writeable = False
    return arr


def _require(mapping: Any, key: str, owner: str) -> Any:
    if not isinstance(mapping, dict):
        raise SchemaError(f"{owner}: expected an object")
    if key not in mapping:
        raise SchemaError(f"{owner}.{key}: missing field")
    return mapping[key]


def _require_str(mapping: Any, key: str, owner: str) -> str:
    value = _require(mapping, key, owner)
    if not isinstance(value, str):
        raise SchemaError(f"{owner}.{key}: expected a string")
    return value


def _check_vocab(value: str, vocab: frozenset[str], field_name: str) -> str:
    if value not in vocab:
        raise SchemaError(f"{field_name}: {value!r} not in {sorted(vocab)}")
    return value


@dataclass(frozen=True)
class ExecutionContext:
    """Where and how a snippet runs inside its package."""

    trigger: str
    file_location: str
    permissions: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "trigger": self.trigger,
            "file_location": self.file_location,
            "permissions": self.permissions,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "ExecutionContext":
        trigger = _check_vocab(
            _require_str(data, "trigger", "context"), TRIGGERS, "context.trigger"
        )
        return cls(
            trigger=trigger,
            file_location=_require_str(data, "file_location", "context"),
            permissions=_require_str(data, "permissions", "context"),
        )


@dataclass(frozen=True)
class ReasoningChain:
    """Analyst-style justification for why a snippet is suspicious.

    ``violated_expectations`` pairs a violation type with the concrete
    expectation statement it breaks; ``strategy`` names the overall
    reasoning approach.
    """

    why_suspicious: str
    violated_expectations: tuple[tuple[str, str], ...]
    boundary_distinction: str
    strategy: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "why_suspicious": self.why_suspicious,
            "violated_expectations": [
                {"violation_type": vt, "statement": stmt}
                for vt, stmt in self.violated_expectations
            ],
            "boundary_distinction": self.boundary_distinction,
            "strategy": self.strategy,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "ReasoningChain":
        raw = _require(data, "violated_expectations", "reasoning")
        if not isinstance(raw, list):
            raise SchemaError("reasoning.violated_expectations: expected an array")
        pairs: list[tuple[str, str]] = []
        for item in raw:
            vt = _check_vocab(
                _require_str(item, "violation_type", "violated_expectations"),
                VIOLATION_TYPES,
                "reasoning.violated_expectations.violation_type",
            )
            pairs.append((vt, _require_str(item, "statement", "violated_expectations")))
        strategy = _check_vocab(
            _require_str(data, "strategy", "reasoning"), STRATEGIES, "reasoning.strategy"
        )
        return cls(
            why_suspicious=_require_str(data, "why_suspicious", "reasoning"),
            violated_expectations=tuple(pairs),
            boundary_distinction=_require_str(data, "boundary_distinction", "reasoning"),
            strategy=strategy,
        )


@dataclass(frozen=True, eq=False)
class KnowledgeEntry:
    """One vetted malicious-behavior example backed by a threat report."""

    id: str
    snippet: str
    language: str
    context: ExecutionContext
    behavior: str
    reasoning: ReasoningChain
    indicators: tuple[str, ...]
    code_embedding: np.ndarray | None
    behavior_embedding: np.ndarray | None
    source_report: str
    audit: str = "unvalidated"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "snippet": self.snippet,
            "language": self.language,
            "context": self.context.to_dict(),
            "behavior": self.behavior,
            "reasoning": self.reasoning.to_dict(),
            "indicators": list(self.indicators),
            "code_embedding": _vector_to_list(self.code_embedding),
            "behavior_embedding": _vector_to_list(self.behavior_embedding),
            "source_report": self.source_report,
            "audit": self.audit,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "KnowledgeEntry":
        language = _check_vocab(
            _require_str(data, "language", "entry"), LANGUAGES, "entry.language"
        )
        audit = _check_vocab(_require_str(data, "audit", "entry"), AUDIT_STATUSES, "entry.audit")
        indicators = _require(data, "indicators", "entry")
        if not isinstance(indicators, list) or not all(isinstance(i, str) for i in indicators):
            raise SchemaError("entry.indicators: expected an array of strings")
        return cls(
            id=_require_str(data, "id", "entry"),
            snippet=_require_str(data, "snippet", "entry"),
            language=language,
            context=ExecutionContext.from_dict(_require(data, "context", "entry")),
            behavior=_require_str(data, "behavior", "entry"),
            reasoning=ReasoningChain.from_dict(_require(data, "reasoning", "entry")),
            indicators=tuple(indicators),
            code_embedding=_vector_from_list(data.get("code_embedding"), "entry.code_embedding"),
            behavior_embedding=_vector_from_list(
                data.get("behavior_embedding"), "entry.behavior_embedding"
            ),
            source_report=_require_str(data, "source_report", "entry"),
            audit=audit,
        )

    def with_embeddings(self, code: np.ndarray, behavior: np.ndarray) -> "KnowledgeEntry":
        code = np.asarray(code, dtype=np.float32)
        behavior = np.asarray(behavior, dtype=np.float32)
        code.flags.writeable = False
        behavior.flags.writeable = False
        return KnowledgeEntry(
            id=self.id,
            snippet=self.snippet,
            language=self.language,
            context=self.context,
            behavior=self.behavior,
            reasoning=self.reasoning,
            indicators=self.indicators,
            code_embedding=code,
            behavior_embedding=behavior,
            source_report=self.source_report,
            audit=self.audit,
        )

    def with_audit(self, audit: str) -> "KnowledgeEntry":
        if audit not in AUDIT_STATUSES:
            raise SchemaError(f"entry.audit: {audit!r} not in {sorted(AUDIT_STATUSES)}")
        return KnowledgeEntry(
            id=self.id,
            snippet=self.snippet,
            language=self.language,
            context=self.context,
            behavior=self.behavior,
            reasoning=self.reasoning,
            indicators=self.indicators,
            code_embedding=self.code_embedding,
            behavior_embedding=self.behavior_embedding,
            source_report=self.source_report,
            audit=audit,
        )


def _norm_message(field_name: str, vec: np.ndarray) -> str | None:
    norm = float(np.linalg.norm(np.asarray(vec, dtype=np.float64)))
    if not math.isfinite(norm) or abs(norm - 1.0) > UNIT_NORM_TOL:
        return f"{field_name}: norm {norm:g} ≠ 1±1e-6"
    return None


def validate_entry_schema(
    entry: KnowledgeEntry, *, require_embeddings: bool = True
) -> list[str]:
    """Check every invariant of a knowledge entry.

    Returns one message per violated invariant, empty when all hold.
    With ``require_embeddings=False`` absent embeddings are allowed
    (extraction candidates are validated before embedding).
    """
    problems: list[str] = []
    if not entry.id:
        problems.append("id: must be non-empty")
    if not entry.snippet.strip():
        problems.append("snippet: must be non-empty")
    if not entry.behavior.strip():
        problems.append("behavior: must be non-empty")
    if entry.language not in LANGUAGES:
        problems.append(f"language: {entry.language!r} not in {sorted(LANGUAGES)}")
    if entry.audit not in AUDIT_STATUSES:
        problems.append(f"audit: {entry.audit!r} not in {sorted(AUDIT_STATUSES)}")
    if entry.context.trigger not in TRIGGERS:
        problems.append(f"context.trigger: {entry.context.trigger!r} not in {sorted(TRIGGERS)}")
    if entry.context.trigger != "unknown" and not entry.context.file_location.strip():
        problems.append("context.file_location: must be non-empty when trigger is known")
    if not entry.reasoning.why_suspicious.strip():
        problems.append("reasoning.why_suspicious: must be non-empty")
    if not entry.reasoning.violated_expectations:
        problems.append("reasoning.violated_expectations: must be non-empty")
    for vt, stmt in entry.reasoning.violated_expectations:
        if vt not in VIOLATION_TYPES:
            problems.append(
                f"reasoning.violated_expectations: {vt!r} not in {sorted(VIOLATION_TYPES)}"
            )
        if not stmt.strip():
            problems.append("reasoning.violated_expectations: statement must be non-empty")
    if entry.reasoning.strategy not in STRATEGIES:
        problems.append(
            f"reasoning.strategy: {entry.reasoning.strategy!r} not in {sorted(STRATEGIES)}"
        )
    for name, vec in (
        ("code_embedding", entry.code_embedding),
        ("behavior_embedding", entry.behavior_embedding),
    ):
        if vec is None:
            if require_embeddings:
                problems.append(f"{name}: missing")
            continue
        msg = _norm_message(name, vec)
        if msg:
            problems.append(msg)
    return problems


@dataclass(frozen=True, eq=False)
class BehaviorCluster:
    """A density cluster of entries sharing one behavioral theme."""

    cluster_id: int
    member_ids: tuple[str, ...]
    centroid: np.ndarray
    representative_id: str
    voted_predicates: tuple[str, ...]
    unified_explanation: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "cluster_id": self.cluster_id,
            "member_ids": list(self.member_ids),
            "centroid": _vector_to_list(self.centroid),
            "representative_id": self.representative_id,
            "voted_predicates": list(self.voted_predicates),
            "unified_explanation": self.unified_explanation,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "BehaviorCluster":
        cluster_id = _require(data, "cluster_id", "cluster")
        if not isinstance(cluster_id, int):
            raise SchemaError("cluster.cluster_id: expected an integer")
        member_ids = _require(data, "member_ids", "cluster")
        predicates = _require(data, "voted_predicates", "cluster")
        centroid = _vector_from_list(_require(data, "centroid", "cluster"), "cluster.centroid")
        if centroid is None:
            raise SchemaError("cluster.centroid: missing")
        return cls(
            cluster_id=cluster_id,
            member_ids=tuple(member_ids),
            centroid=centroid,
            representative_id=_require_str(data, "representative_id", "cluster"),
            voted_predicates=tuple(predicates),
            unified_explanation=_require_str(data, "unified_explanation", "cluster"),
        )


@dataclass(frozen=True)
class SliceStatement:
    """One statement inside a slice: file path, first line, source text."""

    file: str
    line: int
    source: str

    def to_dict(self) -> dict[str, Any]:
        return {"file": self.file, "line": self.line, "source": self.source}

    @classmethod
    def from_dict(cls, data: Any) -> "SliceStatement":
        line = _require(data, "line", "statement")
        if not isinstance(line, int):
            raise SchemaError("statement.line: expected an integer")
        return cls(
            file=_require_str(data, "file", "statement"),
            line=line,
            source=_require_str(data, "source", "statement"),
        )


@dataclass(frozen=True, eq=False)
class CodeSlice:
    """Backward slice from one sensitive call site inside a package."""

    package_id: str
    entry_point: tuple[str, int]
    sensitive_call: tuple[str, int, str, str]
    statements: tuple[SliceStatement, ...]
    behavior_summary: str = ""
    code_embedding: np.ndarray | None = None
    behavior_embedding: np.ndarray | None = None

    def to_dict(self) -> dict[str, Any]:
        file, line, api_name, category = self.sensitive_call
        return {
            "package_id": self.package_id,
            "entry_point": {"file": self.entry_point[0], "line": self.entry_point[1]},
            "sensitive_call": {
                "file": file,
                "line": line,
                "api_name": api_name,
                "category": category,
            },
            "statements": [s.to_dict() for s in self.statements],
            "behavior_summary": self.behavior_summary,
            "code_embedding": _vector_to_list(self.code_embedding),
            "behavior_embedding": _vector_to_list(self.behavior_embedding),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "CodeSlice":
        ep = _require(data, "entry_point", "slice")
        call = _require(data, "sensitive_call", "slice")
        category = _check_vocab(
            _require_str(call, "category", "sensitive_call"),
            CATEGORIES,
            "slice.sensitive_call.category",
        )
        statements = tuple(
            SliceStatement.from_dict(s) for s in _require(data, "statements", "slice")
        )
        return cls(
            package_id=_require_str(data, "package_id", "slice"),
            entry_point=(_require_str(ep, "file", "entry_point"), ep["line"]),
            sensitive_call=(
                _require_str(call, "file", "sensitive_call"),
                call["line"],
                _require_str(call, "api_name", "sensitive_call"),
                category,
            ),
            statements=statements,
            behavior_summary=_require_str(data, "behavior_summary", "slice"),
            code_embedding=_vector_from_list(data.get("code_embedding"), "slice.code_embedding"),
            behavior_embedding=_vector_from_list(
                data.get("behavior_embedding"), "slice.behavior_embedding"
            ),
        )

    def text(self) -> str:
        """Statement sources joined in (file, line) order, for embedding."""
        return "\n".join(s.source for s in self.statements)


@dataclass(frozen=True)
class ScoreTriple:
    """Similarity components for one retrieved entry."""

    entry_id: str
    sim_code: float
    sim_behav: float
    sim_total: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "entry_id": self.entry_id,
            "sim_code": self.sim_code,
            "sim_behav": self.sim_behav,
            "sim_total": self.sim_total,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "ScoreTriple":
        return cls(
            entry_id=_require_str(data, "entry_id", "score"),
            sim_code=float(_require(data, "sim_code", "score")),
            sim_behav=float(_require(data, "sim_behav", "score")),
            sim_total=float(_require(data, "sim_total", "score")),
        )


@dataclass(frozen=True)
class SliceVerdict:
    """Classification outcome for one slice."""

    label: str
    explanation: str
    matched_entry_ids: tuple[str, ...]
    scores: tuple[ScoreTriple, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "explanation": self.explanation,
            "matched_entry_ids": list(self.matched_entry_ids),
            "scores": [s.to_dict() for s in self.scores],
        }

    @classmethod
    def from_dict(cls, data: Any) -> "SliceVerdict":
        label = _check_vocab(_require_str(data, "label", "verdict"), LABELS, "verdict.label")
        return cls(
            label=label,
            explanation=_require_str(data, "explanation", "verdict"),
            matched_entry_ids=tuple(_require(data, "matched_entry_ids", "verdict")),
            scores=tuple(ScoreTriple.from_dict(s) for s in _require(data, "scores", "verdict")),
        )


@dataclass(frozen=True)
class DetectionReport:
    """Package-level result: per-slice verdicts plus the aggregate label."""

    package_id: str
    package_label: str
    slice_verdicts: tuple[SliceVerdict, ...]
    responsible_slices: tuple[int, ...]
    kb_version: str
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "package_id": self.package_id,
            "package_label": self.package_label,
            "slice_verdicts": [v.to_dict() for v in self.slice_verdicts],
            "responsible_slices": list(self.responsible_slices),
            "kb_version": self.kb_version,
            "timings": dict(self.timings),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "DetectionReport":
        label = _check_vocab(
            _require_str(data, "package_label", "report"), LABELS, "report.package_label"
        )
        return cls(
            package_id=_require_str(data, "package_id", "report"),
            package_label=label,
            slice_verdicts=tuple(
                SliceVerdict.from_dict(v) for v in _require(data, "slice_verdicts", "report")
            ),
            responsible_slices=tuple(_require(data, "responsible_slices", "report")),
            kb_version=_require_str(data, "kb_version", "report"),
            timings=dict(_require(data, "timings", "report")),
        )


@dataclass(frozen=True)
class CatalogueEntry:
    """One sensitive API: module pattern, api name (or *), category, language.

    An empty module pattern means a language builtin (bare-name call).
    """

    module_pattern: str
    api_name: str
    category: str
    language: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "module_pattern": self.module_pattern,
            "api_name": self.api_name,
            "category": self.category,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "CatalogueEntry":
        category = _check_vocab(
            _require_str(data, "category", "catalogue"), CATEGORIES, "catalogue.category"
        )
        language = _check_vocab(
            _require_str(data, "language", "catalogue"), LANGUAGES, "catalogue.language"
        )
        module_pattern = _require(data, "module_pattern", "catalogue")
        if not isinstance(module_pattern, str):
            raise SchemaError("catalogue.module_pattern: expected a string")
        return cls(
            module_pattern=module_pattern,
            api_name=_require_str(data, "api_name", "catalogue"),
            category=category,
            language=language,
        )


@dataclass(frozen=True)
class SensitiveApiCatalogue:
    """The set of catalogued sensitive APIs, queryable by language."""

    entries: tuple[CatalogueEntry, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, data: Any) -> "SensitiveApiCatalogue":
        raw = _require(data, "entries", "catalogue")
        if not isinstance(raw, list):
            raise SchemaError("catalogue.entries: expected an array")
        return cls(entries=tuple(CatalogueEntry.from_dict(e) for e in raw))

    def for_language(self, language: str) -> tuple[CatalogueEntry, ...]:
        return tuple(e for e in self.entries if e.language == language)

    def match(self, language: str, dotted_name: str) -> CatalogueEntry | None:
        """Match a resolved dotted call target against the catalogue.

        Prefers the longest module pattern; exact api names win over
        wildcards at the same pattern length.
        """
        best: CatalogueEntry | None = None
        best_rank: tuple[int, int] = (-1, -1)
        for entry in self.entries:
            if entry.language != language:
                continue
            if entry.module_pattern:
                prefix = entry.module_pattern + "."
                if not dotted_name.startswith(prefix):
                    continue
                rest = dotted_name[len(prefix) :]
                if entry.api_name == "*":
                    rank = (len(entry.module_pattern), 0)
                elif rest == entry.api_name:
                    rank = (len(entry.module_pattern), 1)
                else:
                    continue
            else:
                if entry.api_name != dotted_name:
                    continue
                rank = (0, 1)
            if rank > best_rank:
                best, best_rank = entry, rank
        return best
