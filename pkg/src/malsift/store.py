"""The knowledge base: validated entries, embedding matrices, retrieval.

Entries live in insertion order next to two float32 matrices (code and
behavior embeddings, one row per entry).  Retrieval is an exhaustive
scan: per-entry cosine similarities (dot products of unit vectors,
computed in float64) combined as alpha*sim_code + beta*sim_behav,
ranked descending with ties broken by ascending entry id.  The on-disk
format is a directory of hashed files; the KB version is the sha256 of
the manifest that lists those hashes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .embedding import EmbedderIdentity
from .model import (
    BehaviorCluster,
    KnowledgeEntry,
    ScoreTriple,
    canonical_json,
    validate_entry_schema,
)

__all__ = [
    "KbIntegrityError",
    "KnowledgeBase",
    "RetrievalResult",
    "combined_similarity",
    "load_kb",
    "normalize_weights",
    "save_kb",
]

logger = logging.getLogger(__name__)

DEFAULT_K = 5
DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.5

_HEADER_FILE = "header.json"
_ENTRIES_FILE = "entries.jsonl"
_CODE_MATRIX_FILE = "e_code.f32"
_BEHAV_MATRIX_FILE = "e_behav.f32"
_SIDECAR_FILE = "matrices.json"
_CLUSTERS_FILE = "clusters.json"
_MANIFEST_FILE = "manifest.json"

_WEIGHT_TOL = 1e-9


class KbIntegrityError(RuntimeError):
    """Raised when a stored KB is structurally broken or tampered with."""


def normalize_weights(alpha: float, beta: float) -> tuple[float, float]:
    """Scale a non-negative weight pair to sum to one."""
    if alpha < 0 or beta < 0:
        raise ValueError(f"weights must be non-negative, got ({alpha}, {beta})")
    total = alpha + beta
    if total == 0:
        raise ValueError("weights must not both be zero")
    return alpha / total, beta / total


def combined_similarity(sim_code: float, sim_behav: float, alpha: float, beta: float) -> float:
    """Weighted sum of the two similarity channels; weights must sum to 1."""
    if alpha < 0 or beta < 0:
        raise ValueError(f"weights must be non-negative, got ({alpha}, {beta})")
    if abs(alpha + beta - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1, got {alpha} + {beta}")
    return alpha * sim_code + beta * sim_behav


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked matches for one query; ``warning`` flags degenerate cases."""

    matches: tuple[ScoreTriple, ...]
    k: int
    warning: str = ""

    def to_dict(self) -> dict[str, object]:
        return {
            "matches": [m.to_dict() for m in self.matches],
            "k": self.k,
            "warning": self.warning,
        }


class KnowledgeBase:
    """In-memory KB with insertion-ordered entries and embedding matrices."""

    def __init__(
        self,
        embedder: EmbedderIdentity,
        dim_code: int | None = None,
        dim_behav: int | None = None,
        created_at: str | None = None,
    ) -> None:
        self.embedder = embedder
        self.dim_code = dim_code if dim_code is not None else embedder.dim
        self.dim_behav = dim_behav if dim_behav is not None else embedder.dim
        self.created_at = created_at or datetime.now(timezone.utc).isoformat()
        self.kb_version = ""
        self.clusters: tuple[BehaviorCluster, ...] = ()
        self._order: list[str] = []
        self._entries: dict[str, KnowledgeEntry] = {}
        self._rows: dict[str, int] = {}
        self._code_rows: list[np.ndarray] = []
        self._behav_rows: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._order)

    def ids(self) -> list[str]:
        return list(self._order)

    def get(self, entry_id: str) -> KnowledgeEntry:
        return self._entries[entry_id]

    def entries(self) -> list[KnowledgeEntry]:
        return [self._entries[i] for i in self._order]

    def upsert_entry(self, entry: KnowledgeEntry) -> None:
        """Insert or replace one entry; the version marker is cleared.

        Only auto_validated or expert_validated entries are accepted,
        with unit-norm embeddings at the KB's dimensions.
        """
        if entry.audit not in ("auto_validated", "expert_validated"):
            raise ValueError(f"entry {entry.id}: audit status {entry.audit!r} not insertable")
        problems = validate_entry_schema(entry)
        if problems:
            raise ValueError(f"entry {entry.id}: " + "; ".join(problems))
        assert entry.code_embedding is not None and entry.behavior_embedding is not None
        if entry.code_embedding.shape != (self.dim_code,):
            raise ValueError(
                f"entry {entry.id}: code embedding dim {entry.code_embedding.shape} "
                f"!= ({self.dim_code},)"
            )
        if entry.behavior_embedding.shape != (self.dim_behav,):
            raise ValueError(
                f"entry {entry.id}: behavior embedding dim {entry.behavior_embedding.shape} "
                f"!= ({self.dim_behav},)"
            )
        code_row = np.asarray(entry.code_embedding, dtype=np.float32)
        behav_row = np.asarray(entry.behavior_embedding, dtype=np.float32)
        if entry.id in self._rows:
            row = self._rows[entry.id]
            self._code_rows[row] = code_row
            self._behav_rows[row] = behav_row
        else:
            self._rows[entry.id] = len(self._order)
            self._order.append(entry.id)
            self._code_rows.append(code_row)
            self._behav_rows.append(behav_row)
        self._entries[entry.id] = entry
        self.kb_version = ""

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """(E_code, E_behav) float32 matrices in row (insertion) order."""
        if not self._order:
            return (
                np.zeros((0, self.dim_code), dtype=np.float32),
                np.zeros((0, self.dim_behav), dtype=np.float32),
            )
        return np.vstack(self._code_rows), np.vstack(self._behav_rows)

    def query_topk(
        self,
        code_vec: np.ndarray,
        behav_vec: np.ndarray,
        k: int = DEFAULT_K,
        alpha: float = DEFAULT_ALPHA,
        beta: float = DEFAULT_BETA,
    ) -> RetrievalResult:
        """Exhaustive scan over all entries, top k by combined similarity.

        Exact ties in the combined score rank by ascending entry id.
        An empty KB returns no matches plus a warning instead of failing.
        """
        if k <= 0:
            raise ValueError(f"k must be positive, got {k}")
        if abs(alpha + beta - 1.0) > _WEIGHT_TOL or alpha < 0 or beta < 0:
            raise ValueError(f"weights must be non-negative and sum to 1, got ({alpha}, {beta})")
        code_q = np.asarray(code_vec, dtype=np.float64)
        behav_q = np.asarray(behav_vec, dtype=np.float64)
        if code_q.shape != (self.dim_code,) or behav_q.shape != (self.dim_behav,):
            raise ValueError(
                f"query dims {code_q.shape}/{behav_q.shape} do not match KB "
                f"({self.dim_code},)/({self.dim_behav},)"
            )
        if not self._order:
            return RetrievalResult(matches=(), k=k, warning="empty knowledge base")
        scored: list[ScoreTriple] = []
        for entry_id in self._order:
            row = self._rows[entry_id]
            sim_code = float(np.dot(self._code_rows[row].astype(np.float64), code_q))
            sim_behav = float(np.dot(self._behav_rows[row].astype(np.float64), behav_q))
            sim_total = combined_similarity(sim_code, sim_behav, alpha, beta)
            scored.append(
                ScoreTriple(
                    entry_id=entry_id,
                    sim_code=sim_code,
                    sim_behav=sim_behav,
                    sim_total=sim_total,
                )
            )
        scored.sort(key=lambda s: (-s.sim_total, s.entry_id))
        return RetrievalResult(matches=tuple(scored[:k]), k=k)


def _entry_json_line(entry: KnowledgeEntry) -> bytes:
    data = entry.to_dict()
    # Embeddings live in the raw matrix files, not in the JSONL.
    data["code_embedding"] = None
    data["behavior_embedding"] = None
    return canonical_json(data)


def save_kb(kb: KnowledgeBase, path: Path) -> str:
    """Write the KB directory and return its version (manifest hash)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    e_code, e_behav = kb.matrices()
    files: dict[str, bytes] = {
        _HEADER_FILE: canonical_json(
            {
                "embedder": kb.embedder.to_dict(),
                "dim_code": kb.dim_code,
                "dim_behav": kb.dim_behav,
                "created_at": kb.created_at,
            }
        ),
        _ENTRIES_FILE: b"".join(_entry_json_line(e) + b"\n" for e in kb.entries()),
        _CODE_MATRIX_FILE: e_code.astype("<f4").tobytes(),
        _BEHAV_MATRIX_FILE: e_behav.astype("<f4").tobytes(),
        _SIDECAR_FILE: canonical_json(
            {"rows": len(kb), "dim_code": kb.dim_code, "dim_behav": kb.dim_behav}
        ),
        _CLUSTERS_FILE: canonical_json({"clusters": [c.to_dict() for c in kb.clusters]}),
    }
    manifest = canonical_json(
        {"files": {name: hashlib.sha256(blob).hexdigest() for name, blob in sorted(files.items())}}
    )
    for name, blob in files.items():
        (path / name).write_bytes(blob)
    (path / _MANIFEST_FILE).write_bytes(manifest)
    kb.kb_version = hashlib.sha256(manifest).hexdigest()
    logger.info("saved KB to %s (%d entries, version %s)", path, len(kb), kb.kb_version[:12])
    return kb.kb_version


def load_kb(path: Path) -> KnowledgeBase:
    """Load a KB directory, verifying every file against the manifest."""
    path = Path(path)
    manifest_path = path / _MANIFEST_FILE
    if not manifest_path.is_file():
        raise KbIntegrityError(f"{path}: missing {_MANIFEST_FILE}")
    manifest_bytes = manifest_path.read_bytes()
    try:
        manifest = json.loads(manifest_bytes)
    except json.JSONDecodeError as exc:
        raise KbIntegrityError(f"{path}: manifest is not JSON ({exc})") from exc
    hashes = manifest.get("files")
    if not isinstance(hashes, dict):
        raise KbIntegrityError(f"{path}: manifest lacks a files map")
    blobs: dict[str, bytes] = {}
    for name, expected in hashes.items():
        file_path = path / name
        if not file_path.is_file():
            raise KbIntegrityError(f"{path}: missing {name}")
        blob = file_path.read_bytes()
        actual = hashlib.sha256(blob).hexdigest()
        if actual != expected:
            raise KbIntegrityError(f"{path}: {name} hash mismatch")
        blobs[name] = blob

    header = json.loads(blobs[_HEADER_FILE])
    sidecar = json.loads(blobs[_SIDECAR_FILE])
    rows = int(sidecar["rows"])
    dim_code = int(sidecar["dim_code"])
    dim_behav = int(sidecar["dim_behav"])
    if dim_code != int(header["dim_code"]) or dim_behav != int(header["dim_behav"]):
        raise KbIntegrityError(f"{path}: header and sidecar dimensions disagree")

    def matrix(name: str, dim: int) -> np.ndarray:
        blob = blobs[name]
        if len(blob) != rows * dim * 4:
            raise KbIntegrityError(f"{path}: {name} has wrong size for {rows}x{dim}")
        return np.frombuffer(blob, dtype="<f4").reshape(rows, dim)

    e_code = matrix(_CODE_MATRIX_FILE, dim_code)
    e_behav = matrix(_BEHAV_MATRIX_FILE, dim_behav)

    kb = KnowledgeBase(
        embedder=EmbedderIdentity.from_dict(header["embedder"]),
        dim_code=dim_code,
        dim_behav=dim_behav,
        created_at=str(header["created_at"]),
    )
    lines = [line for line in blobs[_ENTRIES_FILE].split(b"\n") if line]
    if len(lines) != rows:
        raise KbIntegrityError(f"{path}: {len(lines)} entries but {rows} matrix rows")
    for i, line in enumerate(lines):
        data = json.loads(line)
        entry = KnowledgeEntry.from_dict(data).with_embeddings(e_code[i], e_behav[i])
        kb.upsert_entry(entry)
    clusters = json.loads(blobs[_CLUSTERS_FILE])
    kb.clusters = tuple(BehaviorCluster.from_dict(c) for c in clusters.get("clusters", []))
    kb.kb_version = hashlib.sha256(manifest_bytes).hexdigest()
    return kb
