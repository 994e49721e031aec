"""Prerequisite and sub-skill answers over the graph.

Explicit edges are returned as-is. Without them, a closed neighborhood of the
target is scored with three transparent signals (graph proximity, text
similarity, shared links) and returned as inferred suggestions. An external
ranker may reorder that closed list but can never add to it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .embedding import Embedder, HashingEmbedder, compose_text
from .graph import NodeKind, Relation, SkillGraph
from .retrieval import Ranker, SourceTag, consult_ranker, minmax_normalize

TRAVERSAL = frozenset(
    {Relation.BROADER, Relation.NARROWER, Relation.RELATED, Relation.HAS_PREREQUISITE, Relation.HAS_SUB_SKILL}
)
NEIGHBORHOOD_HOPS = 2
NEIGHBORHOOD_CAP = 100


@dataclass(frozen=True)
class CandidateSignal:
    node_id: str
    graph_proximity: float
    text_similarity: float
    co_link_count: int
    combined: float


@dataclass(frozen=True)
class AnswerItem:
    node_id: str
    score: float
    source_tag: SourceTag


@dataclass
class StructuralAnswer:
    target_id: str
    items: list[AnswerItem]
    flags: list[str] = field(default_factory=list)


class GraphReasoner:
    def __init__(
        self,
        graph: SkillGraph,
        embedder: Embedder | None = None,
        language: str = "en",
        weights: Sequence[float] = (1.0, 1.0, 1.0),
        ranker: Ranker | None = None,
        cap: int = NEIGHBORHOOD_CAP,
    ):
        if len(weights) != 3 or sum(weights) <= 0:
            raise ValueError("weights must be three non-negative numbers with a positive sum")
        self.graph = graph
        self.embedder = embedder or HashingEmbedder()
        self.language = language
        self.weights = tuple(float(w) for w in weights)
        self.ranker = ranker
        self.cap = cap
        self._vectors: dict[tuple[str, str], np.ndarray] = {}

    # --------------------------------------------------------- neighborhood

    def neighborhood(self, target: str) -> dict[str, int]:
        """Candidate ids mapped to their shortest-path length from ``target``.

        Union of nodes within two hops over the traversal relations (either
        direction) and skills sharing an occupation with the target. Occupation
        nodes and the target itself are excluded; capped by (distance, id).
        """
        graph = self.graph
        graph.get_node(target)
        dist = {target: 0}
        queue = deque([target])
        while queue:
            cur = queue.popleft()
            if dist[cur] == NEIGHBORHOOD_HOPS:
                continue
            for _, nb in graph.neighbors(cur, TRAVERSAL, "both"):
                if nb.id not in dist:
                    dist[nb.id] = dist[cur] + 1
                    queue.append(nb.id)
        for occ in sorted(graph.occupations_of(target)):
            if occ not in graph:
                continue
            for _, nb in graph.neighbors(occ, [Relation.IS_RELEVANT_FOR_OCCUPATION], "both"):
                dist[nb.id] = min(dist.get(nb.id, 2), 2)
        found = {
            nid: d
            for nid, d in dist.items()
            if nid != target and nid in graph and graph.get_node(nid).kind is not NodeKind.OCCUPATION
        }
        kept = sorted(found.items(), key=lambda kv: (kv[1], kv[0]))[: self.cap]
        return dict(kept)

    def _vector(self, node_id: str, language: str) -> np.ndarray:
        key = (node_id, language)
        if key not in self._vectors:
            text, _ = compose_text(self.graph.get_node(node_id), language)
            self._vectors[key] = self.embedder.embed([text], language)[0].astype(np.float64)
        return self._vectors[key]

    def _links(self, node_id: str) -> set[str]:
        related = {nb.id for _, nb in self.graph.neighbors(node_id, [Relation.RELATED], "both")}
        return related | self.graph.occupations_of(node_id)

    def signals(
        self, target: str, candidates: dict[str, int], language: str | None = None
    ) -> list[CandidateSignal]:
        """Score candidates; ``candidates`` maps id to path length. Sorted by combined desc, id asc."""
        if not candidates:
            return []
        lang = language or self.language
        tvec = self._vector(target, lang)
        tlinks = self._links(target)
        ids = sorted(candidates)
        prox = {nid: 1.0 / (1.0 + candidates[nid]) for nid in ids}
        sim = {nid: float(tvec @ self._vector(nid, lang)) for nid in ids}
        colink = {nid: len(tlinks & self._links(nid)) for nid in ids}
        norms = [dict(minmax_normalize([(nid, float(sig[nid])) for nid in ids])) for sig in (prox, sim, colink)]
        total = sum(self.weights)
        out = []
        for nid in ids:
            combined = sum(w * n[nid] for w, n in zip(self.weights, norms)) / total
            out.append(CandidateSignal(nid, prox[nid], sim[nid], colink[nid], combined))
        out.sort(key=lambda s: (-s.combined, s.node_id))
        return out

    # -------------------------------------------------------------- answers

    def _explicit(self, target: str, relations: Sequence[Relation], k: int) -> list[AnswerItem]:
        for rel in relations:
            hits = self.graph.neighbors(target, [rel], "out")
            if hits:
                return [AnswerItem(nb.id, 1.0, SourceTag.EXPLICIT) for _, nb in hits[:k]]
        return []

    def _answer(self, target: str, relations: Sequence[Relation], k: int, language: str | None) -> StructuralAnswer:
        if k < 1:
            raise ValueError("k must be >= 1")
        explicit = self._explicit(target, relations, k)
        if explicit:
            return StructuralAnswer(target, explicit)
        scored = self.signals(target, self.neighborhood(target), language)
        items = [AnswerItem(s.node_id, s.combined, SourceTag.INFERRED_GRAPH) for s in scored[:k]]
        answer = StructuralAnswer(target, items)
        if self.ranker is not None and items:
            answer = self.order_candidates_llm(answer, self.ranker, language)
        return answer

    def prerequisites(self, node_id: str, k: int = 5, language: str | None = None) -> StructuralAnswer:
        return self._answer(node_id, [Relation.HAS_PREREQUISITE], k, language)

    def subskills(self, node_id: str, k: int = 5, language: str | None = None) -> StructuralAnswer:
        # Narrower counts as declared decomposition when hasSubSkill is absent.
        return self._answer(node_id, [Relation.HAS_SUB_SKILL, Relation.NARROWER], k, language)

    def order_candidates_llm(
        self, answer: StructuralAnswer, ranker: Ranker, language: str | None = None
    ) -> StructuralAnswer:
        """Let ``ranker`` permute the inferred items; explicit items stay in front untouched."""
        explicit = [it for it in answer.items if it.source_tag is SourceTag.EXPLICIT]
        inferred = [it for it in answer.items if it.source_tag is not SourceTag.EXPLICIT]
        if not inferred:
            return answer
        lang = language or self.language
        target_label = self.graph.get_node(answer.target_id).label(lang)[0]
        payload = []
        for it in inferred:
            node = self.graph.get_node(it.node_id)
            payload.append(
                {"id": it.node_id, "label": node.label(lang)[0], "snippet": node.descriptions.get(lang, "")[:200]}
            )
        consulted = consult_ranker(ranker, target_label, payload)
        if consulted is None:
            return StructuralAnswer(answer.target_id, list(answer.items), answer.flags + ["ranker_unavailable"])
        order, notes, _ = consulted
        flags = list(answer.flags)
        if notes:
            flags.append("ranker_violation")
        by_id = {it.node_id: it for it in inferred}
        reordered = [replace(by_id[nid], source_tag=SourceTag.LLM_CANDIDATE) for nid in order]
        return StructuralAnswer(answer.target_id, explicit + reordered, flags)
