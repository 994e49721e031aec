"""Retrieval variants, min-max score fusion and closed-set re-ranking."""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .embedding import Embedder
from .hnsw import HnswIndex, SemanticScore
from .lexical import LexicalIndex, LexicalScore

logger = logging.getLogger(__name__)


class Variant(str, Enum):
    BM25_ONLY = "bm25"
    DENSE_ONLY = "dense"
    HYBRID = "hybrid"
    RERANK = "rerank"


class SourceTag(str, Enum):
    EXPLICIT = "explicit"
    INFERRED_GRAPH = "inferred-graph"
    LLM_CANDIDATE = "llm-candidate"


@dataclass(frozen=True)
class FusionConfig:
    variant: Variant = Variant.HYBRID
    alpha: float = 0.5
    k: int = 5
    pool_lex: int = 50
    pool_sem: int = 50
    rerank_n: int = 20

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k > self.pool_lex or self.k > self.pool_sem:
            raise ValueError("k must not exceed the candidate pool sizes")
        if self.rerank_n < self.k:
            raise ValueError("rerank_n must be >= k")

    def with_k(self, k: int) -> "FusionConfig":
        """Copy with result count ``k``, growing pools so the invariants keep holding."""
        return replace(
            self, k=k, pool_lex=max(self.pool_lex, k), pool_sem=max(self.pool_sem, k), rerank_n=max(self.rerank_n, k)
        )


@dataclass
class ScoredCandidate:
    node_id: str
    s_lex_raw: float | None
    s_sem_raw: float | None
    s_lex_norm: float
    s_sem_norm: float
    s_final: float
    source_tag: SourceTag = SourceTag.EXPLICIT
    rerank_score: float | None = None


@dataclass
class SearchResult:
    candidates: list[ScoredCandidate]
    variant: Variant
    language: str
    alpha: float
    flags: list[str] = field(default_factory=list)


def minmax_normalize(scores: Sequence[tuple[str, float]]) -> list[tuple[str, float]]:
    """Map raw scores onto [0, 1]; an all-equal list maps to 1.0 everywhere."""
    if not scores:
        return []
    values = [s for _, s in scores]
    lo, hi = min(values), max(values)
    if hi == lo:
        return [(i, 1.0) for i, _ in scores]
    span = hi - lo
    return [(i, (s - lo) / span) for i, s in scores]


def fuse(lex: Sequence[LexicalScore], sem: Sequence[SemanticScore], alpha: float) -> list[ScoredCandidate]:
    """Convex combination of per-modality min-max normalized scores.

    Each modality is normalized over its own retrieved pool; a candidate that
    only one modality retrieved scores 0.0 for the other.
    """
    lex_raw = {s.node_id: s.s_lex for s in lex}
    sem_raw = {s.node_id: s.s_sem for s in sem}
    lex_norm = dict(minmax_normalize(list(lex_raw.items())))
    sem_norm = dict(minmax_normalize(list(sem_raw.items())))
    out = []
    for nid in set(lex_raw) | set(sem_raw):
        ln = lex_norm.get(nid, 0.0)
        sn = sem_norm.get(nid, 0.0)
        out.append(
            ScoredCandidate(nid, lex_raw.get(nid), sem_raw.get(nid), ln, sn, alpha * ln + (1.0 - alpha) * sn)
        )
    out.sort(key=lambda c: (-c.s_final, c.node_id))
    return out


# ------------------------------------------------------------------ rankers


class RankerUnavailable(RuntimeError):
    pass


@dataclass
class RankerOutput:
    order: list[str]
    scores: dict[str, float] = field(default_factory=dict)


class Ranker(Protocol):
    def rank(self, query: str, items: Sequence[Mapping[str, str]]) -> RankerOutput:
        """Return an ordering of item ids. ``items`` carry ``id``, ``label`` and ``snippet``."""
        ...


class IdentityRanker:
    def rank(self, query: str, items: Sequence[Mapping[str, str]]) -> RankerOutput:
        return RankerOutput([it["id"] for it in items])


class PerturbationRanker:
    """Deterministically swaps adjacent items; seeded by ``seed`` and the query text."""

    def __init__(self, seed: int = 0, swap_probability: float = 0.3):
        self.seed = seed
        self.swap_probability = swap_probability

    def rank(self, query: str, items: Sequence[Mapping[str, str]]) -> RankerOutput:
        digest = hashlib.sha256(f"{self.seed}:{query}".encode()).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        order = [it["id"] for it in items]
        i = 0
        while i < len(order) - 1:
            if rng.random() < self.swap_probability:
                order[i], order[i + 1] = order[i + 1], order[i]
                i += 2
            else:
                i += 1
        n = len(order)
        return RankerOutput(order, {nid: float(n - pos) for pos, nid in enumerate(order)})


class HttpRanker:
    """Client for ``POST {query, candidates:[{id,label,snippet}]}`` -> ``{order:[id]}``."""

    def __init__(self, endpoint: str, timeout: float = 5.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)

    def rank(self, query: str, items: Sequence[Mapping[str, str]]) -> RankerOutput:
        try:
            resp = self._client.post(self.endpoint, json={"query": query, "candidates": [dict(it) for it in items]})
            resp.raise_for_status()
            body = resp.json()
            order = [str(x) for x in body["order"]]
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise RankerUnavailable(str(exc)) from exc
        scores = body.get("scores") or {}
        return RankerOutput(order, {str(k): float(v) for k, v in scores.items()} if isinstance(scores, dict) else {})


def sanitize_order(original: Sequence[str], proposed: Sequence[str]) -> tuple[list[str], list[str]]:
    """Force ``proposed`` into a permutation of ``original``.

    Foreign and repeated ids are dropped; ids the ranker omitted are appended
    in their original relative order. Returns (order, violation notes).
    """
    allowed = set(original)
    seen: set[str] = set()
    order: list[str] = []
    notes: list[str] = []
    for nid in proposed:
        if not isinstance(nid, str) or nid not in allowed:
            notes.append(f"foreign:{nid}")
        elif nid in seen:
            notes.append(f"duplicate:{nid}")
        else:
            seen.add(nid)
            order.append(nid)
    missing = [nid for nid in original if nid not in seen]
    notes.extend(f"missing:{nid}" for nid in missing)
    return order + missing, notes


def consult_ranker(
    ranker: Ranker, query: str, items: Sequence[Mapping[str, str]]
) -> tuple[list[str], list[str], dict[str, float]] | None:
    """Ask ``ranker`` for an order of ``items``; returns (order, violation notes, scores).

    Returns None if the ranker fails in any way. The order is always a
    permutation of the item ids and scores are kept only when finite numbers.
    """
    try:
        out = ranker.rank(query, items)
        proposed = list(out.order)
        raw_scores = dict(out.scores or {})
    except Exception as exc:  # noqa: BLE001 - an external ranker may fail arbitrarily
        logger.warning("ranker unavailable, keeping input order: %s", exc)
        return None
    order, notes = sanitize_order([it["id"] for it in items], proposed)
    scores = {
        k: float(v)
        for k, v in raw_scores.items()
        if isinstance(k, str) and isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
    }
    if notes:
        logger.warning("ranker violated the closed candidate set: %s", ", ".join(notes[:10]))
    return order, notes, scores


Describer = Callable[[str], tuple[str, str]]


def rerank(
    query: str,
    candidates: Sequence[ScoredCandidate],
    ranker: Ranker,
    describe: Describer | None = None,
) -> tuple[list[ScoredCandidate], list[str]]:
    """Reorder a closed candidate list; returns (candidates, flags)."""
    if not candidates:
        raise ValueError("rerank needs at least one candidate")
    describe = describe or (lambda nid: (nid, ""))
    items = []
    for c in candidates:
        label, snippet = describe(c.node_id)
        items.append({"id": c.node_id, "label": label, "snippet": snippet})
    consulted = consult_ranker(ranker, query, items)
    if consulted is None:
        return list(candidates), ["rerank_skipped"]
    order, notes, scores = consulted
    flags = ["rerank_violation"] if notes else []
    by_id = {c.node_id: c for c in candidates}
    return [replace(by_id[nid], rerank_score=scores.get(nid)) for nid in order], flags


# ---------------------------------------------------------------- retriever


class Retriever:
    """Runs the four retrieval variants over prebuilt indices."""

    def __init__(
        self,
        lexical: LexicalIndex,
        vectors: Mapping[str, HnswIndex],
        embedder: Embedder,
        ranker: Ranker | None = None,
        describe: Describer | None = None,
        ef_search: int | None = None,
    ):
        self.lexical = lexical
        self.vectors = dict(vectors)
        self.embedder = embedder
        self.ranker = ranker or IdentityRanker()
        self.describe = describe
        self.ef_search = ef_search

    def lexical_pool(self, query: str, language: str, size: int, flags: list[str]) -> list[LexicalScore]:
        result = self.lexical.search_lexical(query, language, size)
        flags.append(f"lexical:{result.stage}")
        if result.analyzer_fallback:
            flags.append("analyzer_fallback")
        return result.hits

    def semantic_pool(self, query: str, language: str, size: int, flags: list[str]) -> list[SemanticScore]:
        index = self.vectors.get(language)
        if index is None or len(index) == 0:
            flags.append("semantic:no-index")
            return []
        vector = self.embedder.embed([query], language)[0]
        ef = max(self.ef_search or index.params.ef_search, size)
        return index.search(vector, size, ef)

    def search(self, query: str, language: str, config: FusionConfig | None = None) -> SearchResult:
        config = config or FusionConfig()
        if not query or not query.strip():
            raise ValueError("query must not be empty")
        flags: list[str] = []
        variant = config.variant
        if variant is Variant.BM25_ONLY:
            alpha = 1.0
            fused = fuse(self.lexical_pool(query, language, config.k, flags), [], alpha)
        elif variant is Variant.DENSE_ONLY:
            alpha = 0.0
            fused = fuse([], self.semantic_pool(query, language, config.k, flags), alpha)
        else:
            alpha = config.alpha
            lex = self.lexical_pool(query, language, config.pool_lex, flags)
            sem = self.semantic_pool(query, language, config.pool_sem, flags)
            fused = fuse(lex, sem, alpha)
            if variant is Variant.RERANK and fused:
                head, flags_r = rerank(query, fused[: config.rerank_n], self.ranker, self.describe)
                flags.extend(flags_r)
                fused = head
        return SearchResult(fused[: config.k], variant, language, alpha, flags)
