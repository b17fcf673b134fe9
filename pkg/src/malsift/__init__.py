"""malsift: knowledge-grounded detection of malicious software packages.

The library builds a vetted knowledge base of malicious-behavior
examples from threat reports, then scans packages by slicing backward
from sensitive API calls, retrieving the nearest known behaviors with a
dual code/behavior embedding, and classifying each slice against that
evidence.
"""

from .clustering import BehaviorCluster, ClusteringResult, build_clusters
from .detector import (
    aggregate_verdicts,
    classify_slice,
    detect_package,
    render_report,
    summarize_behavior,
)
from .embedding import (
    DEFAULT_DIM,
    EmbeddingError,
    FallbackEmbedder,
    RemoteEmbedder,
    cosine,
    embed_dual,
    fallback_embed,
)
from .evaluation import run_evaluation, write_csv
from .extraction import extract_entries, validate_entry, ws_normalize
from .ingestion import filter_relevance, load_document, load_manifest, reconstruct_document
from .metrics import Metrics, compute_metrics
from .model import (
    CodeSlice,
    DetectionReport,
    ExecutionContext,
    KnowledgeEntry,
    ReasoningChain,
    SchemaError,
    ScoreTriple,
    SliceStatement,
    SliceVerdict,
    validate_entry_schema,
)
from .pipeline import BuildStats, build_knowledge_base
from .providers import HttpProvider, MockProvider, ProviderError, ReplayProvider
from .slicer import (
    PackageSource,
    ProgramGraph,
    SensitiveSite,
    backward_slice,
    build_program_graph,
    load_catalogue,
    load_package_source,
    locate_sensitive_calls,
)
from .store import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_K,
    KbIntegrityError,
    KnowledgeBase,
    RetrievalResult,
    combined_similarity,
    load_kb,
    normalize_weights,
    save_kb,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BehaviorCluster",
    "ClusteringResult",
    "build_clusters",
    "aggregate_verdicts",
    "classify_slice",
    "detect_package",
    "render_report",
    "summarize_behavior",
    "DEFAULT_DIM",
    "EmbeddingError",
    "FallbackEmbedder",
    "RemoteEmbedder",
    "cosine",
    "embed_dual",
    "fallback_embed",
    "run_evaluation",
    "write_csv",
    "extract_entries",
    "validate_entry",
    "ws_normalize",
    "filter_relevance",
    "load_document",
    "load_manifest",
    "reconstruct_document",
    "Metrics",
    "compute_metrics",
    "CodeSlice",
    "DetectionReport",
    "ExecutionContext",
    "KnowledgeEntry",
    "ReasoningChain",
    "SchemaError",
    "ScoreTriple",
    "SliceStatement",
    "SliceVerdict",
    "validate_entry_schema",
    "BuildStats",
    "build_knowledge_base",
    "HttpProvider",
    "MockProvider",
    "ProviderError",
    "ReplayProvider",
    "PackageSource",
    "ProgramGraph",
    "SensitiveSite",
    "backward_slice",
    "build_program_graph",
    "load_catalogue",
    "load_package_source",
    "locate_sensitive_calls",
    "DEFAULT_ALPHA",
    "DEFAULT_BETA",
    "DEFAULT_K",
    "KbIntegrityError",
    "KnowledgeBase",
    "RetrievalResult",
    "combined_similarity",
    "load_kb",
    "normalize_weights",
    "save_kb",
]
