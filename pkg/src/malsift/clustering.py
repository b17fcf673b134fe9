"""Two-level density clustering of knowledge entries.

Code-level clustering groups near-duplicate snippets; behavior-level
clustering groups entries that describe the same behavior.  Both run
HDBSCAN under cosine distance on unit-norm embeddings.  Noise entries
keep the label -1 and remain ordinary, retrievable KB entries; clusters
additionally get a centroid, a representative member, and
majority-voted behavior predicates.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import HDBSCAN

from .model import BehaviorCluster, KnowledgeEntry

__all__ = [
    "BEHAVIOR_LEVEL",
    "CODE_LEVEL",
    "ClusterParams",
    "ClusteringResult",
    "DegenerateClusterError",
    "PREDICATE_VOCABULARY",
    "build_clusters",
    "cluster_level",
    "compute_centroid",
    "predicates_for_entry",
    "select_representative",
]

logger = logging.getLogger(__name__)


class DegenerateClusterError(ValueError):
    """Raised when a cluster's vectors average out to the zero vector."""


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int
    min_samples: int
    epsilon: float


CODE_LEVEL = ClusterParams(min_cluster_size=8, min_samples=4, epsilon=0.0)
BEHAVIOR_LEVEL = ClusterParams(min_cluster_size=40, min_samples=8, epsilon=0.45)

PREDICATE_VOCABULARY = frozenset(
    {
        "data exfiltration",
        "persistence",
        "code injection",
        "command execution",
        "credential theft",
        "anti-analysis",
        "dropper",
        "backdoor",
    }
)

# Keyword mapping from entry prose to behavior predicates.
_PREDICATE_PATTERNS: tuple[tuple[str, re.Pattern[str]], ...] = (
    ("anti-analysis", re.compile(r"anti.analysis|sandbox|evad|obfuscat|conceal")),
    ("backdoor", re.compile(r"backdoor|\bc2\b|command.and.control|remote control")),
    ("code injection", re.compile(r"inject|dynamically supplied code|dynamic code|function constructor")),
    ("command execution", re.compile(r"executes commands|command execution|shell command")),
    ("credential theft", re.compile(r"credential|token|password|secret")),
    ("data exfiltration", re.compile(r"exfiltrat|moves data to or from a remote|transmit|upload")),
    ("dropper", re.compile(r"download.{0,40}execut|retriev.{0,40}execut|second.stage|dropper")),
    ("persistence", re.compile(r"persist|startup|crontab|registry|login item")),
)


def cluster_level(vectors: np.ndarray, params: ClusterParams) -> np.ndarray:
    """HDBSCAN labels for unit-norm row vectors under cosine distance.

    Returns one integer label per row, -1 for noise.  Inputs too small
    to form any cluster come back all noise instead of erroring.
    """
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {matrix.shape}")
    n = matrix.shape[0]
    if n == 0:
        return np.empty(0, dtype=int)
    if n < params.min_cluster_size or n <= params.min_samples:
        return np.full(n, -1, dtype=int)
    distances = 1.0 - matrix @ matrix.T
    distances = np.clip((distances + distances.T) / 2.0, 0.0, None)
    np.fill_diagonal(distances, 0.0)
    clusterer = HDBSCAN(
        min_cluster_size=params.min_cluster_size,
        min_samples=params.min_samples,
        cluster_selection_epsilon=params.epsilon,
        metric="precomputed",
    )
    return np.asarray(clusterer.fit_predict(distances), dtype=int)


def compute_centroid(vectors: np.ndarray) -> np.ndarray:
    """Normalized mean of the member vectors, float32."""
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise ValueError("centroid requires a non-empty 2-d array")
    mean = matrix.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise DegenerateClusterError("member vectors average to zero")
    centroid = (mean / norm).astype(np.float32)
    centroid.flags.writeable = False
    return centroid


def select_representative(
    member_ids: list[str], vectors: np.ndarray, centroid: np.ndarray
) -> str:
    """Member closest to the centroid by cosine; ties pick the smallest id."""
    if len(member_ids) != np.asarray(vectors).shape[0] or not member_ids:
        raise ValueError("member ids and vectors must align and be non-empty")
    c = np.asarray(centroid, dtype=np.float64)
    best_id: str | None = None
    best_sim = -np.inf
    for member_id, row in zip(member_ids, np.asarray(vectors, dtype=np.float64)):
        sim = float(np.dot(row, c))
        if sim > best_sim or (sim == best_sim and (best_id is None or member_id < best_id)):
            best_id, best_sim = member_id, sim
    assert best_id is not None
    return best_id


def predicates_for_entry(entry: KnowledgeEntry) -> frozenset[str]:
    """Map an entry's prose to the closed predicate vocabulary."""
    text = " ".join(
        [entry.behavior, entry.reasoning.why_suspicious]
        + [stmt for _, stmt in entry.reasoning.violated_expectations]
    ).lower()
    return frozenset(p for p, pattern in _PREDICATE_PATTERNS if pattern.search(text))


def vote_predicates(member_predicates: list[frozenset[str]]) -> tuple[str, ...]:
    """Predicates held by a strict majority of members, sorted."""
    if not member_predicates:
        raise ValueError("cannot vote over zero members")
    for predicates in member_predicates:
        unknown = predicates - PREDICATE_VOCABULARY
        if unknown:
            raise ValueError(f"predicates outside the vocabulary: {sorted(unknown)}")
    n = len(member_predicates)
    counts: dict[str, int] = {}
    for predicates in member_predicates:
        for predicate in predicates:
            counts[predicate] = counts.get(predicate, 0) + 1
    return tuple(sorted(p for p, count in counts.items() if 2 * count > n))


@dataclass(frozen=True)
class ClusteringResult:
    code_labels: dict[str, int]
    behavior_clusters: tuple[BehaviorCluster, ...]


def build_clusters(entries: list[KnowledgeEntry]) -> ClusteringResult:
    """Run both clustering levels over embedded entries.

    Entries must carry embeddings.  Behavior clusters are materialized
    with centroid, representative, voted predicates, and a unified
    explanation (the representative's reasoning plus the vote).
    """
    if not entries:
        return ClusteringResult(code_labels={}, behavior_clusters=())
    for entry in entries:
        if entry.code_embedding is None or entry.behavior_embedding is None:
            raise ValueError(f"entry {entry.id} lacks embeddings")
    ids = [e.id for e in entries]
    e_code = np.vstack([np.asarray(e.code_embedding, dtype=np.float64) for e in entries])
    e_behav = np.vstack([np.asarray(e.behavior_embedding, dtype=np.float64) for e in entries])

    code_labels = cluster_level(e_code, CODE_LEVEL)
    behavior_labels = cluster_level(e_behav, BEHAVIOR_LEVEL)
    logger.info(
        "clustering: %d entries, %d code clusters, %d behavior clusters",
        len(entries),
        len({l for l in code_labels if l >= 0}),
        len({l for l in behavior_labels if l >= 0}),
    )

    by_id = {e.id: e for e in entries}
    clusters: list[BehaviorCluster] = []
    for label in sorted({l for l in behavior_labels if l >= 0}):
        member_ids = sorted(ids[i] for i in range(len(ids)) if behavior_labels[i] == label)
        vectors = np.vstack(
            [np.asarray(by_id[m].behavior_embedding, dtype=np.float64) for m in member_ids]
        )
        centroid = compute_centroid(vectors)
        representative_id = select_representative(member_ids, vectors, centroid)
        voted = vote_predicates([predicates_for_entry(by_id[m]) for m in member_ids])
        representative = by_id[representative_id]
        explanation = representative.reasoning.why_suspicious
        if voted:
            explanation += " Shared behavior: " + ", ".join(voted) + "."
        clusters.append(
            BehaviorCluster(
                cluster_id=int(label),
                member_ids=tuple(member_ids),
                centroid=centroid,
                representative_id=representative_id,
                voted_predicates=voted,
                unified_explanation=explanation,
            )
        )
    return ClusteringResult(
        code_labels={ids[i]: int(code_labels[i]) for i in range(len(ids))},
        behavior_clusters=tuple(clusters),
    )
