"""Dual embedding of code snippets and behavior descriptions.

Entries and query slices each get two unit-norm float32 vectors, one
over the raw code text and one over the natural-language behavior
description.  The default embedder is a deterministic hashed
bag-of-tokens (no model download, bit-identical across platforms); a
remote adapter can swap in a real embedding service behind the same
interface.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Protocol

import numpy as np

__all__ = [
    "EmbedderIdentity",
    "EmbeddingError",
    "FallbackEmbedder",
    "RemoteEmbedder",
    "TextEmbedder",
    "cosine",
    "embed_dual",
    "fallback_embed",
    "tokenize",
]

DEFAULT_DIM = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Tokens are maximal alphanumeric runs; underscore separates.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class EmbeddingError(RuntimeError):
    """Raised when an embedder cannot produce a valid vector."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def fallback_embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Hashed bag-of-tokens embedding, unit-norm float32.

    Each token occurrence adds +1 or -1 (bit 63 of its FNV-1a 64 hash)
    at index ``hash mod dim``; the accumulator is L2-normalized.
    Raises EmbeddingError when the text has no tokens or every
    contribution cancels.
    """
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    tokens = tokenize(text)
    if not tokens:
        raise EmbeddingError("text has no tokens to embed")
    acc = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        h = _fnv1a64(token.encode("utf-8"))
        sign = 1.0 if (h >> 63) == 0 else -1.0
        acc[h % dim] += sign
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        raise EmbeddingError("token contributions cancelled to a zero vector")
    vec = (acc / norm).astype(np.float32)
    vec.flags.writeable = False
    return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity computed in float64; raises on zero-norm input."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero-norm vectors")
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class EmbedderIdentity:
    """Names the embedder so a KB can refuse mismatched queries."""

    name: str
    dim: int
    version: str

    def to_dict(self) -> dict[str, object]:
        return {"name": self.name, "dim": self.dim, "version": self.version}

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "EmbedderIdentity":
        return cls(name=str(data["name"]), dim=int(data["dim"]), version=str(data["version"]))


class TextEmbedder(Protocol):
    """text -> unit-norm float32 vector of ``identity.dim`` components."""

    @property
    def identity(self) -> EmbedderIdentity: ...

    def embed(self, text: str) -> np.ndarray: ...


class FallbackEmbedder:
    """The deterministic hashed bag-of-tokens embedder."""

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        self._identity = EmbedderIdentity(name="fnv1a-bag", dim=dim, version="1")

    @property
    def identity(self) -> EmbedderIdentity:
        return self._identity

    def embed(self, text: str) -> np.ndarray:
        return fallback_embed(text, self._identity.dim)


class RemoteEmbedder:
    """Adapter that fetches vectors from an LLM-provider endpoint.

    The provider is asked with task kind "embed" and must answer with a
    JSON array of ``dim`` numbers; the vector is validated to unit norm.
    """

    def __init__(self, provider, name: str, dim: int, version: str = "remote") -> None:
        self._provider = provider
        self._identity = EmbedderIdentity(name=name, dim=dim, version=version)

    @property
    def identity(self) -> EmbedderIdentity:
        return self._identity

    def embed(self, text: str) -> np.ndarray:
        raw = self._provider.complete("embed", text)
        try:
            values = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise EmbeddingError(f"embed response is not JSON: {exc}") from exc
        if not isinstance(values, list) or len(values) != self._identity.dim:
            raise EmbeddingError(
                f"embed response must be an array of {self._identity.dim} numbers"
            )
        vec = np.asarray([float(v) for v in values], dtype=np.float32)
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > 1e-6:
            raise EmbeddingError(f"embed response norm {norm:g} ≠ 1±1e-6")
        vec.flags.writeable = False
        return vec


def embed_dual(
    code_text: str, behavior_text: str, embedder: TextEmbedder
) -> tuple[np.ndarray, np.ndarray]:
    """Embed the code text and the behavior text with the same embedder."""
    return embedder.embed(code_text), embedder.embed(behavior_text)
