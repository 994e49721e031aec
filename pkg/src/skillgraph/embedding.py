"""Text composition and embedders (external HTTP service or hashed-trigram fallback)."""

from __future__ import annotations

import hashlib
import logging
import time
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, Sequence

import httpx
import numpy as np

from .graph import SkillNode

logger = logging.getLogger(__name__)

DIMENSION = 768


class EmbeddingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Embedding:
    node_id: str
    vector: np.ndarray
    language: str
    text_hash: str


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def compose_text(node: SkillNode, language: str) -> tuple[str, bool]:
    """Label, alt labels joined by ``"; "`` and description, one per line.

    Falls back to the first language (alphabetical) that has a label when the
    node has no text in ``language``; the second element reports that.
    """
    lang, fell_back = language, False
    if language not in node.languages:
        candidates = sorted(node.labels) or node.languages
        if not candidates:
            raise ValueError(f"node {node.id} has no text in any language")
        lang, fell_back = candidates[0], True
    label = node.labels.get(lang, "")
    alts = "; ".join(node.alt_labels.get(lang, []))
    desc = node.descriptions.get(lang, "")
    if not (label or alts or desc):
        raise ValueError(f"node {node.id} has no text in any language")
    return f"{label}\n{alts}\n{desc}", fell_back


class Embedder(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str], language: str = "") -> np.ndarray:
        """Return an array of shape (len(texts), dimension) of unit vectors."""
        ...


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return (matrix / norms).astype(np.float32)


@lru_cache(maxsize=200_000)
def _bucket(trigram: str, dimension: int) -> int:
    digest = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


class HashingEmbedder:
    """Deterministic character-trigram feature hashing; no model, no network.

    Language-agnostic: the ``language`` argument is accepted for interface
    parity and ignored.
    """

    def __init__(self, dimension: int = DIMENSION):
        self.dimension = dimension

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        cleaned = " ".join(unicodedata.normalize("NFC", text).lower().split())
        padded = f" {cleaned} "
        for i in range(len(padded) - 2):
            vec[_bucket(padded[i : i + 3], self.dimension)] += 1.0
        if not vec.any():
            vec[0] = 1.0
        return vec / np.linalg.norm(vec)

    def embed(self, texts: Sequence[str], language: str = "") -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.stack([self._vector(t) for t in texts]).astype(np.float32)


class HttpEmbedder:
    """Client for an embedding service: ``POST {texts, lang}`` -> ``{vectors}``."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        retries: int = 3,
        backoff: float = 0.2,
        dimension: int = DIMENSION,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.dimension = dimension
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, texts: Sequence[str], language: str = "") -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._client.post(self.endpoint, json={"texts": list(texts), "lang": language})
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                break
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last = exc
                logger.warning("embedding request failed (attempt %d/%d): %s", attempt + 1, self.retries, exc)
                time.sleep(self.backoff * 2**attempt)
        else:
            raise EmbeddingError(f"embedding service unreachable: {last}")
        matrix = np.asarray(vectors, dtype=np.float32)
        if matrix.shape != (len(texts), self.dimension):
            raise EmbeddingError(f"expected {(len(texts), self.dimension)} vectors, service returned {matrix.shape}")
        return _normalize_rows(matrix)


def embed_nodes(nodes: Sequence[SkillNode], language: str, embedder: Embedder) -> list[Embedding]:
    """Embed every node that has text in ``language`` (no cross-language fallback)."""
    picked = [n for n in nodes if language in n.languages]
    texts = [compose_text(n, language)[0] for n in picked]
    vectors = embedder.embed(texts, language)
    return [Embedding(n.id, v, language, text_hash(t)) for n, v, t in zip(picked, vectors, texts)]
